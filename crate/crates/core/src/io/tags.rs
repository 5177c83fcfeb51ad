//! PTAG time-tag files.
//!
//! Layout (little-endian): the magic `PTAG`, a `u16` version (1), a `u64`
//! resolution in ps, then 9-byte records `{u64 timestamp, u8 channel}`
//! until end of file. Timestamps count resolution ticks and must not
//! decrease within a channel. A `.csv` file with header
//! `timestamp_ps,channel` is accepted in place of the binary format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulate::{PhotonRecord, TagStream};

pub const MAGIC: &[u8; 4] = b"PTAG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 14;
pub const RECORD_LEN: u64 = 9;

/// Writes `stream` with the given tick size. Every timestamp must be a
/// multiple of `resolution_ps`.
pub fn write_ptag<W: Write>(mut w: W, stream: &TagStream, resolution_ps: u64) -> Result<()> {
    if resolution_ps == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&resolution_ps.to_le_bytes())?;
    for r in &stream.records {
        if r.timestamp % resolution_ps != 0 {
            return Err(Error::InvalidInput(format!(
                "timestamp {} ps is not a multiple of the {resolution_ps} ps resolution",
                r.timestamp
            )));
        }
        w.write_all(&(r.timestamp / resolution_ps).to_le_bytes())?;
        w.write_all(&[r.channel])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a PTAG byte stream. The stream duration is the last timestamp
/// plus one tick (zero when there are no records).
pub fn read_ptag<R: Read>(r: R) -> Result<TagStream> {
    let mut bytes = Vec::new();
    BufReader::new(r).read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format_at_byte(0, "bad magic, expected \"PTAG\""));
    }
    if bytes.len() < HEADER_LEN as usize {
        return Err(Error::format_at_byte(bytes.len() as u64, "truncated header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format_at_byte(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let resolution = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    if resolution == 0 {
        return Err(Error::format_at_byte(6, "resolution must be positive"));
    }
    let body = &bytes[HEADER_LEN as usize..];
    if !(body.len() as u64).is_multiple_of(RECORD_LEN) {
        let offset = HEADER_LEN + body.len() as u64 / RECORD_LEN * RECORD_LEN;
        return Err(Error::format_at_byte(offset, "truncated record"));
    }
    let mut last: HashMap<u8, u64> = HashMap::new();
    let mut records = Vec::with_capacity(body.len() / RECORD_LEN as usize);
    for (i, rec) in body.chunks_exact(RECORD_LEN as usize).enumerate() {
        let offset = HEADER_LEN + i as u64 * RECORD_LEN;
        let ticks = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
        let channel = rec[8];
        let timestamp = ticks
            .checked_mul(resolution)
            .ok_or_else(|| Error::format_at_byte(offset, "timestamp overflows u64 picoseconds"))?;
        if let Some(&prev) = last.get(&channel) {
            if timestamp < prev {
                return Err(Error::format_at_byte(
                    offset,
                    format!("timestamp {timestamp} ps on channel {channel} is earlier than {prev} ps"),
                ));
            }
        }
        last.insert(channel, timestamp);
        records.push(PhotonRecord { timestamp, channel });
    }
    Ok(finish(records, resolution))
}

fn finish(records: Vec<PhotonRecord>, resolution: u64) -> TagStream {
    let duration = records.iter().map(|r| r.timestamp).max().map_or(0, |t| t + resolution);
    let channels = records.iter().map(|r| r.channel).collect();
    TagStream::new(duration, channels, records)
}

/// `timestamp_ps,channel` text form.
pub fn write_tag_csv<W: Write>(w: W, stream: &TagStream) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp_ps", "channel"]).map_err(csv_error)?;
    for r in &stream.records {
        out.write_record([r.timestamp.to_string(), r.channel.to_string()]).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tag_csv<R: Read>(r: R) -> Result<TagStream> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp_ps" || &headers[1] != "channel" {
        return Err(Error::format_at_line(1, "expected header timestamp_ps,channel"));
    }
    let mut last: HashMap<u8, u64> = HashMap::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).ok_or_else(|| Error::format_at_line(line, "missing field"));
        let timestamp: u64 =
            field(0)?.parse().map_err(|e| Error::format_at_line(line, format!("bad timestamp: {e}")))?;
        let channel: u8 = field(1)?.parse().map_err(|e| Error::format_at_line(line, format!("bad channel: {e}")))?;
        if let Some(&prev) = last.get(&channel) {
            if timestamp < prev {
                return Err(Error::format_at_line(
                    line,
                    format!("timestamp {timestamp} ps on channel {channel} is earlier than {prev} ps"),
                ));
            }
        }
        last.insert(channel, timestamp);
        records.push(PhotonRecord { timestamp, channel });
    }
    Ok(finish(records, 1))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a tag file, choosing the CSV form by extension.
pub fn read_timetags(path: impl AsRef<Path>) -> Result<TagStream> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_csv(path) {
        read_tag_csv(file)
    } else {
        read_ptag(file)
    }
}

/// Writes a tag file (1 ps resolution for PTAG), choosing the CSV form by
/// extension.
pub fn write_timetags(path: impl AsRef<Path>, stream: &TagStream) -> Result<()> {
    let path = path.as_ref();
    let file = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_tag_csv(file, stream)
    } else {
        write_ptag(file, stream, 1)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::format_at_line(line, format!("{kind:?}")),
    }
}
