//! Biased quadratic-time MMD² with a sum of RBF kernels.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_pair, MetricError};
use crate::expression::ExpressionMatrix;

/// Kernel bandwidths: explicit list, or the median pairwise distance of the
/// pooled sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Bandwidths {
    MedianHeuristic,
    Explicit(Vec<f64>),
}

impl Serialize for Bandwidths {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bandwidths::MedianHeuristic => s.serialize_str("median-heuristic"),
            Bandwidths::Explicit(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidths {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            List(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Name(n) if n == "median-heuristic" => Ok(Bandwidths::MedianHeuristic),
            Raw::Name(n) => Err(serde::de::Error::custom(format!("unknown bandwidth rule `{n}`"))),
            Raw::List(v) => Ok(Bandwidths::Explicit(v)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmdConfig {
    pub bandwidths: Bandwidths,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidths: Bandwidths::MedianHeuristic,
        }
    }
}

impl MmdConfig {
    /// Short description recorded alongside reported values.
    pub fn describe(&self) -> String {
        match &self.bandwidths {
            Bandwidths::MedianHeuristic => "rbf/biased/median-heuristic".to_string(),
            Bandwidths::Explicit(v) => format!(
                "rbf/biased/{}",
                v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("+")
            ),
        }
    }
}

/// Rows per block when forming squared-distance tiles.
const BLOCK: usize = 256;

fn row_norms(x: ArrayView2<f64>) -> Array1<f64> {
    x.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// Squared distances between every row of `a` and every row of `b`, from
/// `|a|² + |b|² - 2 a·b`, clamped at zero.
fn sq_dist_tile(a: ArrayView2<f64>, a_norms: ArrayView1<f64>, b: ArrayView2<f64>, b_norms: ArrayView1<f64>) -> Array2<f64> {
    let mut d = a.dot(&b.t());
    d.indexed_iter_mut()
        .for_each(|((i, j), v)| *v = (a_norms[i] + b_norms[j] - 2.0 * *v).max(0.0));
    d
}

/// Median Euclidean distance over all distinct pairs of the pooled sample.
pub fn median_pairwise_distance(x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let pooled = ndarray::concatenate(Axis(0), &[x, y]).expect("same width");
    let norms = row_norms(pooled.view());
    let n = pooled.nrows();
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let mut d: Vec<f64> = starts
        .par_iter()
        .flat_map_iter(|&lo| {
            let hi = (lo + BLOCK).min(n);
            let tile = sq_dist_tile(
                pooled.slice(s![lo..hi, ..]),
                norms.slice(s![lo..hi]),
                pooled.slice(s![lo.., ..]),
                norms.slice(s![lo..]),
            );
            // tile column c is pooled row lo + c; keep pairs above the diagonal
            let mut out = Vec::new();
            for (r, row) in tile.rows().into_iter().enumerate() {
                out.extend(row.iter().skip(r + 1).map(|d2| d2.sqrt()));
            }
            out
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Mean kernel value between all row pairs of `a` and `b`, for every bandwidth.
fn mean_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, gammas: &[f64]) -> Vec<f64> {
    let (an, bn) = (row_norms(a), row_norms(b));
    let starts: Vec<usize> = (0..a.nrows()).step_by(BLOCK).collect();
    let sums = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + BLOCK).min(a.nrows());
            let tile = sq_dist_tile(a.slice(s![lo..hi, ..]), an.slice(s![lo..hi]), b, bn.view());
            gammas
                .iter()
                .map(|g| tile.iter().map(|d2| (-g * d2).exp()).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    let denom = (a.nrows() * b.nrows()) as f64;
    (0..gammas.len())
        .map(|k| sums.iter().map(|row| row[k]).sum::<f64>() / denom)
        .collect()
}

/// Biased MMD² between rows of `x` and rows of `y`.
pub fn mmd_arrays(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &MmdConfig) -> Result<f64, MetricError> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(MetricError::EmptyMatrix);
    }
    if x.ncols() != y.ncols() {
        return Err(MetricError::VocabularyMismatch);
    }
    let bandwidths = match &cfg.bandwidths {
        Bandwidths::Explicit(v) => {
            if v.is_empty() || v.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                return Err(MetricError::InvalidConfig(
                    "bandwidths must be a nonempty list of positive numbers".into(),
                ));
            }
            v.clone()
        }
        Bandwidths::MedianHeuristic => {
            let m = median_pairwise_distance(x, y);
            vec![if m > 0.0 { m } else { 1.0 }]
        }
    };
    let gammas: Vec<f64> = bandwidths.iter().map(|s| 1.0 / (2.0 * s * s)).collect();
    let kxx = mean_kernel(x, x, &gammas);
    let kyy = mean_kernel(y, y, &gammas);
    let kxy = mean_kernel(x, y, &gammas);
    let total: f64 = (0..gammas.len()).map(|k| kxx[k] + kyy[k] - 2.0 * kxy[k]).sum();
    Ok(total.max(0.0))
}

pub fn mmd(r: &ExpressionMatrix, s: &ExpressionMatrix, cfg: &MmdConfig) -> Result<f64, MetricError> {
    check_pair(r, s)?;
    mmd_arrays(r.values().view(), s.values().view(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_points_closed_form() {
        let cfg = MmdConfig {
            bandwidths: Bandwidths::Explicit(vec![0.7]),
        };
        let c: f64 = 1.3;
        let v = mmd_arrays(array![[0.0]].view(), array![[c]].view(), &cfg).unwrap();
        let expect = 2.0 - 2.0 * (-c * c / (2.0 * 0.49)).exp();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn identical_samples() {
        let x = array![[0.0, 1.0], [2.0, 0.5], [1.0, 1.0]];
        let v = mmd_arrays(x.view(), x.view(), &MmdConfig::default()).unwrap();
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn median_of_pairs() {
        // pairwise distances 1, 2, 3
        let x = array![[0.0], [1.0]];
        let y = array![[3.0]];
        assert_eq!(median_pairwise_distance(x.view(), y.view()), 2.0);
        // four points on a line: distances 1,1,1,2,2,3 -> 1.5
        let x = array![[0.0], [1.0]];
        let y = array![[2.0], [3.0]];
        assert_eq!(median_pairwise_distance(x.view(), y.view()), 1.5);
    }

    #[test]
    fn bandwidth_config_round_trips() {
        let cfg: MmdConfig = serde_json::from_str(r#"{"bandwidths":"median-heuristic"}"#).unwrap();
        assert_eq!(cfg.bandwidths, Bandwidths::MedianHeuristic);
        let cfg: MmdConfig = serde_json::from_str(r#"{"bandwidths":[1.0,2.5]}"#).unwrap();
        assert_eq!(cfg.bandwidths, Bandwidths::Explicit(vec![1.0, 2.5]));
        assert_eq!(cfg.describe(), "rbf/biased/1+2.5");
        assert!(serde_json::from_str::<MmdConfig>(r#"{"bandwidths":"silverman"}"#).is_err());
        let bad = MmdConfig {
            bandwidths: Bandwidths::Explicit(vec![]),
        };
        assert!(mmd_arrays(array![[0.0]].view(), array![[1.0]].view(), &bad).is_err());
    }
}
