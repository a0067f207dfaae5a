//! End-to-end orchestration: generate, train the scorer, export weights,
//! train each downstream arm, and evaluate on held-out originals.

mod config;
mod report;
mod run;

pub use config::{Arm, PipelineConfig};
pub use report::{
    ArmMetrics, MetricsReport, QaDiagnostics, Report, SeedMetrics, BINNING_NOTE, REPORT_FORMAT,
    REPORT_VERSION,
};
pub use run::{evaluate, qa_diagnostics, run_pipeline, run_seed, SeedOutcome};
