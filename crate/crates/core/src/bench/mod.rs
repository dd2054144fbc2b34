//! Evaluation harness: runs methods on leaf clouds and reports area, CPU
//! time and peak memory per leaf and per plant.

pub mod config;
pub mod deviation;
mod method;
pub mod pipeline;
pub mod plots;
pub mod resources;
pub mod suite;
pub mod synth;
pub mod worker;

pub use config::{BenchConfig, Orientation, PreprocessConfig};
pub use deviation::{deviation_vs_benchmark, percent_deviation, DeviationReport, LeafDeviation, PlantDeviation};
pub use method::MethodId;
pub use pipeline::{
    measure, preprocess, reconstruct, run_in_process, run_method, LeafId, LeafInput, MethodOutput, Prepared,
    ReconstructionResult,
};
pub use plots::{emit_plots, render_chart, Metric};
pub use resources::{process_cpu_seconds, CountingAllocator, PhaseMeter, PhaseUsage, RamSource};
pub use suite::{run_suite, summarize, write_report, PlantSummary, SuiteOptions, SuiteReport};
pub use synth::{SyntheticSample, SyntheticShape};
pub use worker::{run_isolated, serve, WorkerRequest, WORKER_ARG};
