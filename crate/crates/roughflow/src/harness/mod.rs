//! Configuration, sweep orchestration, persistence and report emission.

pub mod checks;
mod config;
mod emit;
mod persist;
mod sweep;

pub use config::{parse_config, DomainSpec, NsSpec, PairSpec, RunConfig, SweepSpec, OUTPUT_ENV};
pub use emit::{emit, from_json, read_json, to_json, to_svg, write_csv, Format, CSV_COLUMNS};
pub use persist::{read_field, write_checkpoint, write_field, FieldHeader, FIELD_SCHEMA};
pub use sweep::{
    rate_verdict, run_pair, sweep, PairMeasure, RateVerdict, Status, SweepRecord, SCHEMA_VERSION,
    SLOPE_FRACTION,
};
