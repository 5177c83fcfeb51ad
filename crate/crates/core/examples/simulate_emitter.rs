//! Simulates a CW three-level emitter behind a lossy detector and compares the
//! count rate with the steady-state prediction.

use spekit::kinetics::{quantum_efficiency, steady_state, ThreeLevelRates};
use spekit::simulate::{apply_detector, simulate_photon_stream, DetectorModel, SimConfig};

fn main() -> spekit::Result<()> {
    let rates = ThreeLevelRates::new(0.05, 0.29, 0.01, 1.0 / 675.0)?;
    let pop = steady_state(&rates)?;
    let stream = simulate_photon_stream(&rates, &SimConfig { segments: 4, ..SimConfig::cw(1e8, 1) })?;
    let det = DetectorModel {
        efficiency: 0.1,
        dead_time_ps: 22_000,
        dark_rate: 1e-6,
        jitter_sigma_ps: 350.0,
        ..DetectorModel::ideal()
    };
    let detected = apply_detector(&stream, &det, 2)?;

    println!("populations g/e/m: {:.4} {:.4} {:.4}", pop.ground, pop.excited, pop.metastable);
    println!("quantum efficiency: {:.3}", quantum_efficiency(&rates)?);
    println!(
        "emitted: {} photons ({:.4}/ns, predicted {:.4}/ns)",
        stream.len(),
        stream.len() as f64 / stream.duration_ns(),
        rates.gamma_eg * pop.excited
    );
    println!("detected: {} photons ({:.0} cps)", detected.len(), detected.len() as f64 / detected.duration_ns() * 1e9);
    Ok(())
}
