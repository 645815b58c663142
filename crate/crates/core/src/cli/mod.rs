//! Sweep runner and report generation behind the `wdm` binary.

pub mod plot;
pub mod report;
pub mod sweep;

pub use report::{aggregate, exceeds_dataset_size, read_rows, report, CellSummary, ReportOutcome, SweepRow};
pub use sweep::{
    describe_plan, run_cell, run_sweep, CellFailure, CellResult, EncoderSettings, Manifest, SweepAxis, SweepCell,
    SweepConfig, SweepOutcome, CSV_HEADER,
};
