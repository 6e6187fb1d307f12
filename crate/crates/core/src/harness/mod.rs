//! Config-driven simulation sweeps, the classification pipeline and CSV I/O.

pub mod classification;
pub mod config;
pub mod csv_io;
pub mod experiment;

pub use classification::{
    gmm_testbed, run_classification, run_classification_grid, ClassificationConfig, ClassificationParams,
    ClassificationReport, LabeledData,
};
pub use config::{CellParams, DeltaRule, ExperimentConfig, FixedParams, N0Rule, Real, SHatRule, Sweep, SweepParam, TRule};
pub use csv_io::{format_sci, read_experiment, read_labeled, write_classification, write_experiment, write_labeled};
pub use experiment::{run_experiment, AggregateResult, IterationStat, Method, RepRecord, RunOptions};
