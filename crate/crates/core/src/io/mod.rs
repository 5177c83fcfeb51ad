//! File formats: PTAG time tags, CSV tables and JSON reports.

mod tables;
mod tags;

pub use tables::{
    read_records, read_records_file, read_spectrum, read_spectrum_file, write_json_file, write_records,
    write_records_file, write_spectrum, write_spectrum_file, write_table, write_table_file,
};
pub use tags::{
    read_ptag, read_tag_csv, read_timetags, write_ptag, write_tag_csv, write_timetags, HEADER_LEN, MAGIC, RECORD_LEN,
    VERSION,
};
