//! CSV tables and JSON reports.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::tags::csv_error;
use crate::error::{Error, Result};
use crate::spectra::Spectrum;

/// Reads rows whose header names match the fields of `T`. `#` lines are
/// comments.
pub fn read_records<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    rdr.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn read_records_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_records(File::open(path)?)
}

pub fn write_records<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_file<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), rows)
}

/// Numeric table with a fixed header; values use the shortest
/// round-tripping decimal form.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidInput(format!("row has {} values for {} columns", row.len(), header.len())));
        }
        out.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table_file(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_table(BufWriter::new(File::create(path)?), header, rows)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::InvalidInput(format!("json: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(serde::Deserialize, Serialize)]
struct SpectrumRow {
    wavelength_nm: f64,
    counts: f64,
}

/// `wavelength_nm,counts` with an optional `# temperature_K=<value>` comment.
pub fn read_spectrum<R: Read>(mut r: R) -> Result<Spectrum> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut temperature = None;
    for (i, line) in text.lines().enumerate() {
        let Some(comment) = line.trim().strip_prefix('#') else { continue };
        if let Some(v) = comment.trim().strip_prefix("temperature_K=") {
            let t: f64 = v.trim().parse().map_err(|e| Error::format_at_line(i + 1, format!("bad temperature: {e}")))?;
            temperature = Some(t);
        }
    }
    let rows: Vec<SpectrumRow> = read_records(text.as_bytes())?;
    let (w, c) = rows.into_iter().map(|r| (r.wavelength_nm, r.counts)).unzip();
    Spectrum::new(w, c, temperature)
}

pub fn read_spectrum_file(path: impl AsRef<Path>) -> Result<Spectrum> {
    read_spectrum(File::open(path)?)
}

pub fn write_spectrum<W: Write>(mut w: W, spec: &Spectrum) -> Result<()> {
    if let Some(t) = spec.temperature_k {
        writeln!(w, "# temperature_K={t}")?;
    }
    let rows: Vec<SpectrumRow> = spec
        .wavelength_nm
        .iter()
        .zip(&spec.counts)
        .map(|(&wavelength_nm, &counts)| SpectrumRow { wavelength_nm, counts })
        .collect();
    write_records(w, &rows)
}

pub fn write_spectrum_file(path: impl AsRef<Path>, spec: &Spectrum) -> Result<()> {
    write_spectrum(BufWriter::new(File::create(path)?), spec)
}
