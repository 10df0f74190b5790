//! Experiment harness for the `bayescub` command-line tool: single
//! integrations, randomized-tolerance sweeps and fast-vs-generic timings.

pub mod compare;
pub mod record;
pub mod run;

pub use compare::{compare, write_compare_csv, CompareRecord, COMPARE_HEADER};
pub use record::{read_records, success_rate, write_records, RunRecord, RECORD_HEADER};
pub use run::{run_one, sweep, RunSpec, SweepConfig, SweepRun};
