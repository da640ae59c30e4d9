//! Experiment harness for the CE-filtered federated local SGD simulator:
//! JSON configs, figure presets, sweeps, trace files and summaries.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod summary;
pub mod sweep;

use std::path::Path;

use cefl_core::{ObjectiveKind, Trace};

pub use config::{load_config, ConfigFile, LoadedConfig};
pub use error::{HarnessError, Result};
pub use summary::{summarize, Metric, SummaryStats};

/// Metric a trace is judged by: the optimality gap, or the mean squared
/// gradient for objectives without a PL constant.
pub fn metric_for(kind: ObjectiveKind) -> Metric {
    match kind {
        ObjectiveKind::RegressionSin => Metric::OptimalityGap,
        ObjectiveKind::SigmoidNorm => Metric::MeanSqGrad,
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub rows: Vec<output::CsvRow>,
    /// Absent when the trace is too short to summarize.
    pub summary: Option<SummaryStats>,
    pub abort: Option<String>,
}

/// Runs a resolved config and writes its directory.
pub fn execute(loaded: &LoadedConfig, dir: &Path) -> Result<RunResult> {
    let trace: Trace<f64> = cefl_core::engine::run_experiment(&loaded.experiment)?;
    let rows = output::write_run(dir, loaded, &trace)?;
    let summary = summarize(&rows, metric_for(loaded.experiment.instance.kind)).ok();
    if let Some(reason) = &trace.abort {
        log::warn!("{}: {reason}", dir.display());
    }
    Ok(RunResult { rows, summary, abort: trace.abort })
}
