//! TOML run configuration with one `[[arm]]` table per experimental arm.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::expression::MatrixFormat;
use crate::inference::GbmConfig;
use crate::llm::{HttpConfig, LlmGrnOptions};
use crate::metrics::{ForestConfig, MmdConfig};
use crate::synth::LinearUniformSpec;

/// Where the TF/target partition comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbSource {
    /// Curated TF list file.
    HumanFile,
    /// Sliding-window LLM extraction.
    Llm,
    /// Generator partition of a LinearUniform data source.
    Truth,
}

impl KbSource {
    pub fn as_str(self) -> &'static str {
        match self {
            KbSource::HumanFile => "human_file",
            KbSource::Llm => "llm",
            KbSource::Truth => "truth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrnSource {
    Llm,
    Statistical,
    Random,
    /// A GRN read from `grn_file`.
    File,
    /// Generator graph of a LinearUniform data source.
    Truth,
    /// Real training cells compared against the test set.
    Control,
    /// Structure-free bootstrap baseline.
    Stage1,
}

impl GrnSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GrnSource::Llm => "llm",
            GrnSource::Statistical => "statistical",
            GrnSource::Random => "random",
            GrnSource::File => "file",
            GrnSource::Truth => "truth",
            GrnSource::Control => "control",
            GrnSource::Stage1 => "stage1",
        }
    }

    /// Label used in reports.
    pub fn report_label(self) -> &'static str {
        match self {
            GrnSource::Stage1 => "stage1-surrogate",
            other => other.as_str(),
        }
    }

    /// Control and stage1 rows are excluded from best-value marking.
    pub fn is_baseline(self) -> bool {
        matches!(self, GrnSource::Control | GrnSource::Stage1)
    }

    pub fn needs_partition(self) -> bool {
        !matches!(self, GrnSource::Control | GrnSource::File | GrnSource::Truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    #[serde(default)]
    pub kb_source: Option<KbSource>,
    pub grn_source: GrnSource,
    #[serde(default)]
    pub grn_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub matrix: Option<PathBuf>,
    /// Defaults from the file extension.
    #[serde(default)]
    pub format: Option<MatrixFormat>,
    #[serde(default)]
    pub linear_uniform: Option<LinearUniformSpec>,
    /// Two-column CSV `barcode,label` used for annotation transfer.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_size: usize,
    pub val_size: usize,
    pub n_top_genes: usize,
    /// Defaults to `test_size`.
    pub min_cells_expressed: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_size: 500,
            val_size: 500,
            n_top_genes: 1000,
            min_cells_expressed: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    pub tf_list: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub model: String,
    pub temperature: f64,
    pub endpoint: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub concurrency: usize,
    pub window: usize,
    pub stride: usize,
    pub validate_membership: bool,
    /// Defaults to `<out_dir>/llm_cache.jsonl`.
    pub cache: Option<PathBuf>,
    /// Recorded transcripts replayed under `--offline`.
    pub fixture: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let opts = LlmGrnOptions::default();
        Self {
            model: opts.model,
            temperature: opts.temperature,
            endpoint: HttpConfig::default().endpoint,
            timeout_secs: HttpConfig::default().timeout_secs,
            max_retries: opts.max_retries,
            concurrency: opts.concurrency,
            window: 20,
            stride: 10,
            validate_membership: true,
            cache: None,
            fixture: None,
        }
    }
}

impl LlmConfig {
    pub fn options(&self) -> LlmGrnOptions {
        LlmGrnOptions {
            model: self.model.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            concurrency: self.concurrency,
        }
    }

    pub fn http(&self) -> HttpConfig {
        HttpConfig {
            endpoint: self.endpoint.clone(),
            timeout_secs: self.timeout_secs,
            ..HttpConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub mmd: MmdConfig,
    pub forest: ForestConfig,
    /// Compare library-rescaled counts instead of lognorm values.
    pub raw_counts: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            mmd: MmdConfig::default(),
            forest: ForestConfig::default(),
            raw_counts: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub n_pcs: usize,
    pub markers: Vec<String>,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self { n_pcs: 50, markers: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Cross-validation seeds; each expands every arm into repeats.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Synthetic datasets drawn per seed.
    #[serde(default = "default_n_datasets")]
    pub n_datasets: usize,
    /// Cells per synthetic dataset; defaults to the test-set size.
    #[serde(default)]
    pub n_synthetic: Option<usize>,
    #[serde(default = "default_library_scale")]
    pub library_scale: f64,
    /// Biological context inserted into LLM prompts.
    #[serde(default)]
    pub context: String,
    #[serde(default = "default_parallel_arms")]
    pub parallel_arms: usize,
    #[serde(default = "default_true")]
    pub write_synthetic: bool,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub kb: KbConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub gbm: GbmConfig,
    /// Run statistical inference on raw training counts instead of lognorm.
    #[serde(default)]
    pub infer_on_raw: bool,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub annotation: AnnotationConfig,
    #[serde(rename = "arm", default)]
    pub arms: Vec<ArmConfig>,
}

fn default_name() -> String {
    "run".into()
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_k() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1]
}
fn default_n_datasets() -> usize {
    4
}
fn default_library_scale() -> f64 {
    10_000.0
}
fn default_parallel_arms() -> usize {
    1
}
fn default_true() -> bool {
    true
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn require_file(what: &str, p: &Path) -> Result<(), PipelineError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("{what} `{}` does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    /// Parses a config file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        for p in [
            self.data.matrix.as_mut(),
            self.data.labels.as_mut(),
            self.kb.tf_list.as_mut(),
            self.llm.cache.as_mut(),
            self.llm.fixture.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        for arm in &mut self.arms {
            if let Some(p) = arm.grn_file.as_mut() {
                resolve(base, p);
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.llm
            .cache
            .clone()
            .unwrap_or_else(|| self.out_dir.join("llm_cache.jsonl"))
    }

    pub fn matrix_format(&self) -> Option<MatrixFormat> {
        let path = self.data.matrix.as_ref()?;
        self.data.format.or_else(|| {
            match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
                Some(e) if e == "mtx" => Some(MatrixFormat::Mtx),
                _ => Some(MatrixFormat::Csv),
            }
        })
    }

    /// Partition source an arm uses, after applying defaults.
    pub fn kb_source_of(&self, arm: &ArmConfig) -> Option<KbSource> {
        if !arm.grn_source.needs_partition() {
            return match arm.grn_source {
                GrnSource::Truth => Some(KbSource::Truth),
                _ => None,
            };
        }
        arm.kb_source.or(if self.kb.tf_list.is_some() {
            Some(KbSource::HumanFile)
        } else if self.data.linear_uniform.is_some() {
            Some(KbSource::Truth)
        } else {
            None
        })
    }

    pub fn uses_llm(&self) -> bool {
        self.arms.iter().any(|a| {
            a.grn_source == GrnSource::Llm || self.kb_source_of(a) == Some(KbSource::Llm)
        })
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self, offline: bool) -> Result<(), PipelineError> {
        if self.arms.is_empty() {
            return Err(config_err("config defines no [[arm]] tables"));
        }
        if self.k == 0 {
            return Err(config_err("k must be at least 1"));
        }
        if self.seeds.is_empty() || self.n_datasets == 0 {
            return Err(config_err("need at least one seed and one dataset per seed"));
        }
        if !(self.library_scale > 0.0 && self.library_scale.is_finite()) {
            return Err(config_err("library_scale must be positive"));
        }
        if self.n_synthetic == Some(0) {
            return Err(config_err("n_synthetic must be positive"));
        }
        match (&self.data.matrix, &self.data.linear_uniform) {
            (Some(p), None) => require_file("data.matrix", p)?,
            (None, Some(spec)) => spec.validate().map_err(|e| config_err(e.to_string()))?,
            _ => return Err(config_err("set exactly one of data.matrix and data.linear_uniform")),
        }
        if let Some(p) = &self.data.labels {
            require_file("data.labels", p)?;
        }
        let mut names = BTreeSet::new();
        for arm in &self.arms {
            let ok_name = !arm.name.is_empty()
                && arm.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && !arm.name.starts_with('.');
            if !ok_name {
                return Err(config_err(format!(
                    "arm name `{}` must be nonempty and use only letters, digits, '-', '_' or '.'",
                    arm.name
                )));
            }
            if !names.insert(arm.name.as_str()) {
                return Err(config_err(format!("duplicate arm name `{}`", arm.name)));
            }
            match arm.grn_source {
                GrnSource::File => match &arm.grn_file {
                    Some(p) => require_file(&format!("arm {} grn_file", arm.name), p)?,
                    None => return Err(config_err(format!("arm {} needs grn_file", arm.name))),
                },
                GrnSource::Truth if self.data.linear_uniform.is_none() => {
                    return Err(config_err(format!(
                        "arm {}: grn_source = truth needs data.linear_uniform",
                        arm.name
                    )));
                }
                _ => {}
            }
            match self.kb_source_of(arm) {
                Some(KbSource::HumanFile) => match &self.kb.tf_list {
                    Some(p) => require_file("kb.tf_list", p)?,
                    None => {
                        return Err(config_err(format!(
                            "arm {} uses kb_source = human_file but kb.tf_list is not set",
                            arm.name
                        )));
                    }
                },
                Some(KbSource::Truth) if self.data.linear_uniform.is_none() => {
                    return Err(config_err(format!(
                        "arm {}: kb_source = truth needs data.linear_uniform",
                        arm.name
                    )));
                }
                None if arm.grn_source.needs_partition() => {
                    return Err(config_err(format!("arm {} needs a kb_source", arm.name)));
                }
                _ => {}
            }
        }
        if self.uses_llm() {
            if self.context.trim().is_empty() {
                return Err(config_err("LLM arms need a nonempty `context`"));
            }
            if self.llm.window == 0 || self.llm.stride == 0 || self.llm.stride > self.llm.window {
                return Err(config_err("llm.window and llm.stride need 1 <= stride <= window"));
            }
            if offline {
                if let Some(p) = &self.llm.fixture {
                    require_file("llm.fixture", p)?;
                }
            }
        }
        self.gbm.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data.linear_uniform]
        n_tfs = 10
        n_targets = 20
        k = 3
        n_cells = 300
        coeff_range = [0.5, 1.5]
        noise_scale = 0.1
        seed = 1

        [[arm]]
        name = "random"
        grn_source = "random"

        [[arm]]
        name = "control"
        grn_source = "control"
    "#;

    #[test]
    fn defaults_and_kb_resolution() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.k, 10);
        assert!(!cfg.infer_on_raw);
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.n_datasets, 4);
        assert_eq!(cfg.kb_source_of(&cfg.arms[0]), Some(KbSource::Truth));
        assert_eq!(cfg.kb_source_of(&cfg.arms[1]), None);
        cfg.validate(false).unwrap();
        let round = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(round.arms, cfg.arms);
    }

    #[test]
    fn missing_tf_list_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "barcode,A\nc0,1\n").unwrap();
        let text = format!(
            "[data]\nmatrix = {:?}\n[kb]\ntf_list = \"missing.txt\"\n[[arm]]\nname = \"1b\"\nkb_source = \"human_file\"\ngrn_source = \"statistical\"\n",
            m
        );
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        let err = cfg.validate(true).unwrap_err();
        assert!(matches!(err, PipelineError::Config(ref m) if m.contains("kb.tf_list")), "{err}");
    }

    #[test]
    fn rejects_bad_arms() {
        let mut cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        cfg.arms[1].name = "random".into();
        assert!(cfg.validate(false).is_err());
        let mut cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        cfg.arms[0].name = "../x".into();
        assert!(cfg.validate(false).is_err());
        assert!(RunConfig::from_toml_str("bogus = 1\n[data]\n").is_err());
    }
}
