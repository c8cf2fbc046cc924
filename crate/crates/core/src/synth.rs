//! GRN-conditioned synthetic expression data.
//!
//! [`Scm`] is a two-stage structural causal model: TF expression is drawn as
//! whole rows from the training cells, then each target is produced by a
//! boosted regression on its `k` parent TFs plus a resampled training
//! residual. [`generate_linear_uniform`] produces benchmark data from a known
//! graph so that inference and synthesis can be scored against ground truth.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expression::{library_rescale, DataError, ExpressionMatrix, Scale};
use crate::grn::{random_grn, GeneVocabulary, Grn, GrnError, TfPartition};
use crate::inference::{fit_boosted_trees, target_seed, BoostedModel, GbmConfig, InferenceError};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("gene `{0}` missing from training data")]
    SymbolMissing(String),
    #[error("bootstrap pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Fit(#[from] InferenceError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grn(#[from] GrnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearUniformSpec {
    pub n_tfs: usize,
    pub n_targets: usize,
    pub k: usize,
    pub n_cells: usize,
    pub coeff_range: (f64, f64),
    pub noise_scale: f64,
    pub seed: u64,
}

impl LinearUniformSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.k == 0 || self.n_tfs < self.k {
            return Err(SynthError::InvalidSpec(format!(
                "need 1 <= k <= n_tfs, got k={} n_tfs={}",
                self.k, self.n_tfs
            )));
        }
        if self.n_targets == 0 || self.n_cells == 0 {
            return Err(SynthError::InvalidSpec("n_targets and n_cells must be positive".into()));
        }
        let (lo, hi) = self.coeff_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SynthError::InvalidSpec(format!("bad coefficient range ({lo}, {hi})")));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(SynthError::InvalidSpec("noise_scale must be non-negative".into()));
        }
        Ok(())
    }

    pub fn tf_symbol(i: usize) -> String {
        format!("TF{i:03}")
    }

    pub fn target_symbol(i: usize) -> String {
        format!("GENE{i:04}")
    }
}

/// Output of [`generate_linear_uniform`].
#[derive(Clone, Debug)]
pub struct LinearUniformData {
    pub matrix: ExpressionMatrix,
    pub grn: Grn,
    /// Edge weights per target, aligned with the target's sorted regulators.
    pub weights: BTreeMap<String, Vec<f64>>,
}

/// TFs i.i.d. Uniform(0,1); each target is a weighted sum of its parents plus
/// Gaussian noise, clipped at zero.
pub fn generate_linear_uniform(spec: &LinearUniformSpec) -> Result<LinearUniformData, SynthError> {
    spec.validate()?;
    let tf_names: Vec<String> = (0..spec.n_tfs).map(LinearUniformSpec::tf_symbol).collect();
    let target_names: Vec<String> = (0..spec.n_targets).map(LinearUniformSpec::target_symbol).collect();
    let partition = TfPartition::new(&tf_names, &target_names)?;
    let grn = random_grn(&partition, spec.k, seed::derive_seed(spec.seed, "graph"))?;

    let coeff = Uniform::new(spec.coeff_range.0, spec.coeff_range.1)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut wrng = seed::rng(seed::derive_seed(spec.seed, "weights"));
    let weights: BTreeMap<String, Vec<f64>> = grn
        .regulators()
        .keys()
        .map(|t| (t.clone(), (0..spec.k).map(|_| coeff.sample(&mut wrng)).collect()))
        .collect();

    let n_genes = spec.n_tfs + spec.n_targets;
    let mut values = Array2::<f64>::zeros((spec.n_cells, n_genes));
    let mut rng = seed::rng(seed::derive_seed(spec.seed, "cells"));
    let noise = (spec.noise_scale > 0.0)
        .then(|| Normal::new(0.0, spec.noise_scale).expect("validated noise scale"));
    // partition symbols are zero-padded, so sorted order equals index order
    let parent_idx: Vec<Vec<usize>> = grn
        .regulators()
        .values()
        .map(|regs| regs.iter().map(|r| r[2..].parse::<usize>().expect("TF symbol")).collect())
        .collect();
    let weight_rows: Vec<&Vec<f64>> = weights.values().collect();
    for mut row in values.rows_mut() {
        for j in 0..spec.n_tfs {
            row[j] = rng.random::<f64>();
        }
        for (t, (parents, w)) in parent_idx.iter().zip(&weight_rows).enumerate() {
            let mut v: f64 = parents.iter().zip(w.iter()).map(|(&p, &wi)| wi * row[p]).sum();
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            row[spec.n_tfs + t] = v.max(0.0);
        }
    }
    let vocab = GeneVocabulary::new(tf_names.iter().chain(&target_names))?;
    let matrix = ExpressionMatrix::from_rows(values, vocab, Scale::Raw)?;
    Ok(LinearUniformData { matrix, grn, weights })
}

/// Fitted generator for one target gene.
#[derive(Clone, Debug)]
pub struct TargetModel {
    pub target: String,
    pub parents: Vec<String>,
    /// Positions of `parents` within the TF pool columns.
    pub parent_columns: Vec<usize>,
    pub model: BoostedModel,
    pub residuals: Vec<f64>,
}

/// Two-stage structural causal model fitted on training cells.
#[derive(Clone, Debug)]
pub struct Scm {
    genes: GeneVocabulary,
    tf_symbols: Vec<String>,
    tf_pool: Array2<f64>,
    targets: Vec<TargetModel>,
    grn: Grn,
    library_scale: f64,
    /// For each output column: `Ok(tf column)` or `Err(target index)`.
    layout: Vec<Result<usize, usize>>,
}

/// Random choices behind one synthetic sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDraws {
    /// Pool row used for each synthetic cell.
    pub tf_rows: Vec<usize>,
    /// Residual index per (cell, target).
    pub residuals: Array2<usize>,
}

impl Scm {
    pub fn genes(&self) -> &GeneVocabulary {
        &self.genes
    }

    pub fn grn(&self) -> &Grn {
        &self.grn
    }

    pub fn tf_symbols(&self) -> &[String] {
        &self.tf_symbols
    }

    pub fn tf_pool(&self) -> &Array2<f64> {
        &self.tf_pool
    }

    pub fn target_models(&self) -> &[TargetModel] {
        &self.targets
    }

    pub fn library_scale(&self) -> f64 {
        self.library_scale
    }

    pub fn draw(&self, n_cells: usize, seed: u64) -> Result<SynthDraws, SynthError> {
        let pool = self.tf_pool.nrows();
        if pool == 0 || self.targets.iter().any(|t| t.residuals.is_empty()) {
            return Err(SynthError::EmptyPool);
        }
        let mut rng = seed::rng(seed);
        let tf_rows = (0..n_cells).map(|_| rng.random_range(0..pool)).collect();
        let residuals = Array2::from_shape_fn((n_cells, self.targets.len()), |(_, t)| {
            rng.random_range(0..self.targets[t].residuals.len())
        });
        Ok(SynthDraws { tf_rows, residuals })
    }

    /// Pool rows selected by `draws`, one per synthetic cell.
    pub fn tf_values(&self, draws: &SynthDraws) -> Array2<f64> {
        self.tf_pool.select(Axis(0), &draws.tf_rows)
    }

    /// Target values from given TF values and residual draws, clipped at zero
    /// and laid out in vocabulary order. No library normalization.
    pub fn realize(&self, tf_values: &Array2<f64>, residuals: &Array2<usize>) -> Array2<f64> {
        let n = tf_values.nrows();
        assert_eq!(tf_values.ncols(), self.tf_symbols.len());
        assert_eq!(residuals.dim(), (n, self.targets.len()));
        let target_cols: Vec<Vec<f64>> = self
            .targets
            .par_iter()
            .enumerate()
            .map(|(t, tm)| {
                let mut buf = vec![0.0; tm.parent_columns.len()];
                (0..n)
                    .map(|i| {
                        for (b, &c) in buf.iter_mut().zip(&tm.parent_columns) {
                            *b = tf_values[[i, c]];
                        }
                        let v = tm.model.predict_row(&buf) + tm.residuals[residuals[[i, t]]];
                        v.max(0.0)
                    })
                    .collect()
            })
            .collect();
        Array2::from_shape_fn((n, self.layout.len()), |(i, j)| match self.layout[j] {
            Ok(c) => tf_values[[i, c]],
            Err(t) => target_cols[t][i],
        })
    }
}

pub fn fit_scm(
    train: &ExpressionMatrix,
    grn: &Grn,
    cfg: &GbmConfig,
    library_scale: f64,
) -> Result<Scm, SynthError> {
    if !(library_scale > 0.0 && library_scale.is_finite()) {
        return Err(SynthError::InvalidSpec("library_scale must be positive".into()));
    }
    let partition = grn.partition();
    if let Some(missing) = partition
        .tfs()
        .iter()
        .chain(partition.targets())
        .find(|s| !train.genes().contains(s))
    {
        return Err(SynthError::SymbolMissing(missing.clone()));
    }
    if train.n_cells() == 0 {
        return Err(SynthError::EmptyPool);
    }

    let tf_symbols: Vec<String> = partition.tfs().iter().cloned().collect();
    let tf_cols = train.gene_columns(&tf_symbols)?;
    let tf_pool = train.values().select(Axis(1), &tf_cols);

    let targets: Vec<TargetModel> = grn
        .regulators()
        .par_iter()
        .map(|(target, parents)| {
            let parent_columns: Vec<usize> = parents
                .iter()
                .map(|p| tf_symbols.binary_search(p).expect("parent is a TF"))
                .collect();
            let features = tf_pool.select(Axis(1), &parent_columns);
            let col = train.genes().index_of(target).expect("checked above");
            let y = train.values().column(col);
            let fit = fit_boosted_trees(
                features.view(),
                y,
                &GbmConfig {
                    seed: target_seed(cfg.seed, target),
                    ..cfg.clone()
                },
            )?;
            let pred = fit.model.predict(features.view());
            let residuals = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            Ok(TargetModel {
                target: target.clone(),
                parents: parents.clone(),
                parent_columns,
                model: fit.model,
                residuals,
            })
        })
        .collect::<Result<_, SynthError>>()?;

    let target_pos: BTreeMap<&str, usize> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (t.target.as_str(), i))
        .collect();
    let mut out_cols = Vec::new();
    let mut layout = Vec::new();
    for (j, sym) in train.genes().symbols().iter().enumerate() {
        if let Ok(c) = tf_symbols.binary_search(sym) {
            layout.push(Ok(c));
            out_cols.push(j);
        } else if let Some(&t) = target_pos.get(sym.as_str()) {
            layout.push(Err(t));
            out_cols.push(j);
        }
    }
    Ok(Scm {
        genes: train.genes().select(&out_cols),
        tf_symbols,
        tf_pool,
        targets,
        grn: grn.clone(),
        library_scale,
        layout,
    })
}

fn synthetic_matrix(values: Array2<f64>, genes: GeneVocabulary, scale: f64) -> Result<ExpressionMatrix, SynthError> {
    let barcodes = (0..values.nrows()).map(|i| format!("syn{i}")).collect();
    let m = ExpressionMatrix::new(values, barcodes, genes, Scale::Raw)?;
    Ok(library_rescale(&m, scale)?)
}

/// Draws `n_cells` synthetic cells, each rescaled to the model's library size.
pub fn sample_synthetic(scm: &Scm, n_cells: usize, seed: u64) -> Result<ExpressionMatrix, SynthError> {
    if n_cells == 0 {
        return Err(SynthError::InvalidSpec("n_cells must be at least 1".into()));
    }
    let draws = scm.draw(n_cells, seed)?;
    let values = scm.realize(&scm.tf_values(&draws), &draws.residuals);
    synthetic_matrix(values, scm.genes.clone(), scm.library_scale)
}

/// Structure-free baseline: TF rows are bootstrapped jointly, every target
/// value is drawn independently from its own training column.
pub fn sample_structure_free(
    train: &ExpressionMatrix,
    partition: &TfPartition,
    n_cells: usize,
    seed: u64,
    library_scale: f64,
) -> Result<ExpressionMatrix, SynthError> {
    if n_cells == 0 {
        return Err(SynthError::InvalidSpec("n_cells must be at least 1".into()));
    }
    let pool = train.n_cells();
    if pool == 0 {
        return Err(SynthError::EmptyPool);
    }
    let cols: Vec<usize> = train
        .genes()
        .symbols()
        .iter()
        .enumerate()
        .filter(|(_, s)| partition.is_tf(s) || partition.is_target(s))
        .map(|(j, _)| j)
        .collect();
    let mut rng = seed::rng(seed);
    let tf_rows: Vec<usize> = (0..n_cells).map(|_| rng.random_range(0..pool)).collect();
    let mut values = Array2::<f64>::zeros((n_cells, cols.len()));
    for (jj, &j) in cols.iter().enumerate() {
        let sym = &train.genes().symbols()[j];
        for i in 0..n_cells {
            let src = if partition.is_tf(sym) {
                tf_rows[i]
            } else {
                rng.random_range(0..pool)
            };
            values[[i, jj]] = train.values()[[src, j]];
        }
    }
    synthetic_matrix(values, train.genes().select(&cols), library_scale)
}
