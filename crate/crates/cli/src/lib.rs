//! Batch harness around `kgqa-core`: configuration, file handling,
//! manifests and reports for each pipeline stage.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

pub use commands::{
    cmd_eval, cmd_filter, cmd_generate, cmd_ingest, cmd_score, cmd_stats, cmd_train, FilterInputs, ScorerSpec,
    TrainInputs,
};
pub use config::{Overrides, PipelineConfig, Regime};
pub use report::RunReport;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            anyhow::ensure!(n > 0, "--threads must be positive");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}
