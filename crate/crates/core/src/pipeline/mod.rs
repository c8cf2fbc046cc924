//! End-to-end orchestration: ingest, partition, GRN construction, synthesis,
//! evaluation and reporting, driven by a TOML config.

pub mod config;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ArmConfig, GrnSource, KbSource, RunConfig};
pub use manifest::{ArmRecord, RunManifest, RunStatus, SeedMetrics, StageTiming};
pub use plot::plot_projection;
pub use report::{make_report, Report};
pub use run::{build_client, load_partition, run_setting, RunOptions};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: BoxError,
    },
    #[error("manifests are not comparable: {0}")]
    IncompatibleManifests(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn stage(stage: impl Into<String>, source: impl Into<BoxError>) -> Self {
        PipelineError::Stage {
            stage: stage.into(),
            source: source.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// One symbol per line; blank lines and `#` comments are skipped and only
/// the first comma- or whitespace-separated field is read.
pub fn read_symbol_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()).next())
        .map(crate::grn::normalize_symbol)
        .filter(|s| !s.is_empty())
        .collect())
}
