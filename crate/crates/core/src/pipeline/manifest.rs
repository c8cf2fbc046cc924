use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{GrnSource, KbSource, RunConfig};
use super::{io_err, PipelineError};
use crate::metrics::MetricReport;
use crate::seed::file_sha256;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed { stage: String, message: String },
}

/// Metric means for one seed, averaged over its synthetic datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub cosine: f64,
    pub euclidean: f64,
    pub mmd: f64,
    pub rf_auroc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub name: String,
    pub kb_source: Option<KbSource>,
    pub grn_source: GrnSource,
    pub report: MetricReport,
    pub per_seed: Vec<SeedMetrics>,
    /// GRN files, one per seed, relative to the output directory.
    pub grns: Vec<String>,
    pub partition_digest: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub name: String,
    pub out_dir: PathBuf,
    pub config: RunConfig,
    pub vocabulary_digest: String,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to `out_dir` → sha256.
    pub outputs: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
    pub arms: Vec<ArmRecord>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            name: config.name.clone(),
            out_dir: config.out_dir.clone(),
            config,
            vocabulary_digest: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: Vec::new(),
            arms: Vec::new(),
            status: RunStatus::Running,
        }
    }

    pub fn path(&self) -> PathBuf {
        self.out_dir.join(MANIFEST_FILE)
    }

    pub fn write(&self) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        super::write_file(&self.path(), json + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), PipelineError> {
        let digest = file_sha256(path).map_err(io_err(path))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Digests every file under `out_dir` except the manifest and `skip`.
    pub fn digest_outputs(&mut self, skip: &[PathBuf]) -> Result<(), PipelineError> {
        let mut out = BTreeMap::new();
        let root = self.out_dir.clone();
        let mut stack = vec![root.clone()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = entry.map_err(io_err(&dir))?.path();
                if path.is_dir() {
                    stack.push(path);
                    continue;
                }
                if path == self.path() || skip.iter().any(|s| s == &path) {
                    continue;
                }
                let rel = path.strip_prefix(&root).unwrap_or(&path);
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, file_sha256(&path).map_err(io_err(&path))?);
            }
        }
        self.outputs = out;
        Ok(())
    }
}
