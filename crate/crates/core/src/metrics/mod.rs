//! Fidelity metrics between real and synthetic cells, plus annotation
//! transfer and marker summaries for biological plausibility checks.

pub mod annotate;
pub mod auroc;
pub mod distance;
pub mod forest;
pub mod markers;
pub mod mmd;
pub mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotate::{annotate_and_proportions, CellTypeRow, CellTypeTable, Pca};
pub use auroc::auroc;
pub use distance::{cosine_distance, euclidean_distance};
pub use forest::{rf_auroc, ForestConfig, RandomForest};
pub use markers::{marker_summary, markers_to_csv, MarkerStat};
pub use mmd::{mmd, Bandwidths, MmdConfig};
pub use report::MetricReport;

use crate::expression::{DataError, ExpressionMatrix};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("centroid has zero norm")]
    ZeroCentroid,
    #[error("matrix has no cells")]
    EmptyMatrix,
    #[error("real and synthetic matrices use different gene vocabularies")]
    VocabularyMismatch,
    #[error("AUROC needs both classes")]
    SingleClass,
    #[error("need at least {need} cells per side, have {have}")]
    TooFewCells { need: usize, have: usize },
    #[error("invalid label set: {0}")]
    EmptyLabel(String),
    #[error("marker `{0}` not in vocabulary")]
    UnknownMarker(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Mean and sample standard deviation over repeats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_samples(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

pub(crate) fn check_pair(r: &ExpressionMatrix, s: &ExpressionMatrix) -> Result<(), MetricError> {
    if r.genes() != s.genes() {
        return Err(MetricError::VocabularyMismatch);
    }
    if r.n_cells() == 0 || s.n_cells() == 0 {
        return Err(MetricError::EmptyMatrix);
    }
    Ok(())
}
