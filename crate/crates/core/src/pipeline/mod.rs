//! Config-driven experiment recipes, repetition over sample sets and
//! report emission.

mod config;
mod corpus;
mod report;
mod run;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind, Paths, ProbeParams};
pub use corpus::{layer_file_name, stack_frames, LayerCorpus};
pub use report::{
    curve_csv, emit_report, read_report, LayerReport, LayerStat, ReportDocument, TOOLKIT_VERSION,
};
pub use run::{benchmark_files, run_experiment};
