//! Annotation transfer: PCA on labeled real cells, per-label centroids in PC
//! space, nearest-centroid assignment of synthetic cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_pair, MetricError};
use crate::expression::{normalize_log1p, ExpressionMatrix, Scale};

/// Principal axes fitted on a centered matrix.
#[derive(Clone, Debug)]
pub struct Pca {
    mean: Array1<f64>,
    /// `n_components × n_features`, rows sorted by explained variance.
    components: Array2<f64>,
}

impl Pca {
    pub fn fit(x: ArrayView2<f64>, n_components: usize) -> Result<Self, MetricError> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(MetricError::EmptyMatrix);
        }
        if n_components == 0 {
            return Err(MetricError::InvalidConfig("n_pcs must be positive".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let centered = &x - &mean;
        let k = n_components.min(n).min(p);
        let c = DMatrix::from_row_iterator(n, p, centered.iter().copied());

        // eigen-decompose the smaller of the covariance and Gram matrices
        let mut components = Array2::<f64>::zeros((k, p));
        if p <= n {
            let eig = SymmetricEigen::new(c.transpose() * &c);
            for (row, col) in top_indices(eig.eigenvalues.as_slice(), k).into_iter().enumerate() {
                for j in 0..p {
                    components[[row, j]] = eig.eigenvectors[(j, col)];
                }
            }
        } else {
            let eig = SymmetricEigen::new(&c * c.transpose());
            let largest = eig.eigenvalues.max().max(0.0);
            for (row, col) in top_indices(eig.eigenvalues.as_slice(), k).into_iter().enumerate() {
                // directions with no variance stay zero
                if eig.eigenvalues[col] <= 1e-12 * largest {
                    continue;
                }
                let v = c.transpose() * eig.eigenvectors.column(col);
                let norm = v.norm();
                if norm > 0.0 {
                    for j in 0..p {
                        components[[row, j]] = v[j] / norm;
                    }
                }
            }
        }
        // sign convention: largest-magnitude loading is positive
        for mut row in components.rows_mut() {
            let pivot = row
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                row.mapv_inplace(|v| -v);
            }
        }
        Ok(Self { mean, components })
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean).dot(&self.components.t())
    }
}

fn top_indices(eigenvalues: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTypeRow {
    pub label: String,
    pub count: usize,
    pub percentage: f64,
}

/// Label counts and percentages, sorted by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTypeTable {
    pub rows: Vec<CellTypeRow>,
}

impl CellTypeTable {
    /// Tabulates `assigned` over `labels` (which may include absent labels).
    pub fn tabulate<'a>(labels: impl IntoIterator<Item = &'a str>, assigned: &[String]) -> Self {
        let mut counts: BTreeMap<String, usize> = labels.into_iter().map(|l| (l.to_string(), 0)).collect();
        for a in assigned {
            *counts.entry(a.clone()).or_default() += 1;
        }
        let total = assigned.len().max(1) as f64;
        Self {
            rows: counts
                .into_iter()
                .map(|(label, count)| CellTypeRow {
                    label,
                    count,
                    percentage: 100.0 * count as f64 / total,
                })
                .collect(),
        }
    }

    pub fn percentage(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.percentage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,count,percentage\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.label, r.count, r.percentage);
        }
        out
    }
}

fn as_lognorm(m: &ExpressionMatrix) -> Result<ExpressionMatrix, MetricError> {
    match m.scale() {
        Scale::Lognorm => Ok(m.clone()),
        Scale::Raw => Ok(normalize_log1p(m, 10_000.0)?),
    }
}

/// Labels every synthetic cell with the nearest real-label centroid in PCA
/// space and tabulates the resulting proportions.
pub fn annotate_and_proportions(
    labeled_real: &ExpressionMatrix,
    labels: &[String],
    synthetic: &ExpressionMatrix,
    n_pcs: usize,
) -> Result<(Vec<String>, CellTypeTable), MetricError> {
    check_pair(labeled_real, synthetic)?;
    if labels.len() != labeled_real.n_cells() {
        return Err(MetricError::LengthMismatch(format!(
            "{} labels for {} cells",
            labels.len(),
            labeled_real.n_cells()
        )));
    }
    if labels.iter().any(|l| l.trim().is_empty()) {
        return Err(MetricError::EmptyLabel("blank cell label".into()));
    }
    let real = as_lognorm(labeled_real)?;
    let syn = as_lognorm(synthetic)?;
    let pca = Pca::fit(real.values().view(), n_pcs)?;
    let real_pc = pca.transform(real.values().view());

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_str()).or_default().push(i);
    }
    let centroids: Vec<(&str, Array1<f64>)> = groups
        .iter()
        .map(|(l, rows)| {
            let c = real_pc.select(Axis(0), rows).mean_axis(Axis(0)).expect("nonempty group");
            (*l, c)
        })
        .collect();

    let syn_pc = pca.transform(syn.values().view());
    let assigned: Vec<String> = syn_pc
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, "");
            for (label, c) in &centroids {
                let d: f64 = row.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, label);
                }
            }
            best.1.to_string()
        })
        .collect();
    let table = CellTypeTable::tabulate(groups.keys().copied(), &assigned);
    Ok((assigned, table))
}
