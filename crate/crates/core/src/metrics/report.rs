use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MeanStd;

/// Fidelity metrics for one real/synthetic pairing, aggregated over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub real: String,
    pub synthetic: String,
    pub cosine: MeanStd,
    pub euclidean: MeanStd,
    pub mmd: MeanStd,
    pub rf_auroc: MeanStd,
    pub n_repeats: usize,
    /// Kernel and bandwidth rule used for `mmd`.
    pub mmd_kernel: String,
}

pub const CSV_HEADER: &str = "real,synthetic,cosine_mean,cosine_std,euclidean_mean,euclidean_std,mmd_mean,mmd_std,rf_auroc_mean,rf_auroc_std,n_repeats,mmd_kernel";

impl MetricReport {
    pub fn csv_row(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{},{}", self.real, self.synthetic);
        for m in [self.cosine, self.euclidean, self.mmd, self.rf_auroc] {
            let _ = write!(out, ",{},{}", m.mean, m.std);
        }
        let _ = write!(out, ",{},{}", self.n_repeats, self.mmd_kernel);
        out
    }

    pub fn to_csv(reports: &[MetricReport]) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// Values in table column order: cosine, euclidean, mmd, rf_auroc.
    pub fn means(&self) -> [f64; 4] {
        [self.cosine.mean, self.euclidean.mean, self.mmd.mean, self.rf_auroc.mean]
    }
}
