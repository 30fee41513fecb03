//! Randomized experiments that measure forward errors of transformer stacks
//! under simulated low precision, and their CSV output.
//!
//! An experiment is fully determined by its [`ExperimentSpec`]: repetition `r`
//! draws its instance from stream `r` of a generator keyed by the seed, and
//! results are aggregated in repetition order, so the output does not depend on
//! the number of worker threads.

pub mod cases;
pub mod experiments;
pub mod rng;
pub mod spec;
pub mod stats;
pub mod table;

pub use experiments::{
    gen_instance, run_attention_input_scaling, run_depth_sweep, run_experiment, run_normalization_placement,
    run_wkwq_scaling, Instance, Record, RecordKey, ResultTable,
};
pub use spec::{ExperimentKind, ExperimentSpec, SpecOverrides};
pub use stats::{summarize, ErrorStats};
pub use table::{emit_csv, emit_histograms, hist_path, read_csv, CsvRow};
