//! Writes a simulated HBT stream as PTAG and CSV and reads both back.

use spekit::io::{read_timetags, write_timetags};
use spekit::kinetics::ThreeLevelRates;
use spekit::simulate::{simulate_photon_stream, split_hbt, SimConfig};

fn main() -> spekit::Result<()> {
    let rates = ThreeLevelRates::new(0.05, 0.29, 0.01, 1.0 / 675.0)?;
    let stream = simulate_photon_stream(&rates, &SimConfig::cw(1e7, 5))?;
    let (a, b) = split_hbt(&stream, 6);
    let tags = a.merge(&b);
    let dir = std::env::temp_dir().join("spekit-tag-files");
    std::fs::create_dir_all(&dir)?;
    for name in ["hbt.ptag", "hbt.csv"] {
        let path = dir.join(name);
        write_timetags(&path, &tags)?;
        let back = read_timetags(&path)?;
        let bytes = std::fs::metadata(&path)?.len();
        println!(
            "{}: {} records, {bytes} bytes, identical: {}",
            path.display(),
            back.len(),
            back.records == tags.records
        );
    }
    Ok(())
}
