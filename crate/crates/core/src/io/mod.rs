//! File formats: event files, graymaps, run configuration, and CSV tables.

mod config;
mod events;
mod pgm;
mod tables;

pub use config::{AcquisitionMode, RunConfig, KEYS as CONFIG_KEYS};
pub use events::{
    events_to_bytes, read_events, read_events_file, write_events, write_events_file,
    HEADER_BYTES as EVENT_HEADER_BYTES, MAGIC as EVENT_MAGIC, VERSION as EVENT_VERSION,
};
pub use pgm::{decode_pgm, encode_pgm16, encode_pgm8, read_pgm, write_pgm16};
pub use tables::{write_flux_csv, write_metrics_csv};
