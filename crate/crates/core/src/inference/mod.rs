//! Statistical GRN inference: one boosted regression per target gene on the
//! TF expression columns, keeping the `k` TFs with the largest importance.

pub mod gbm;

use std::fmt::Write as _;

use ndarray::Axis;
use rayon::prelude::*;
use thiserror::Error;

pub use gbm::{fit_boosted_trees, BoostedFit, BoostedModel, GbmConfig};

use crate::expression::{DataError, ExpressionMatrix};
use crate::grn::{validate_grn, Grn, GrnError, TfPartition};
use crate::seed;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid boosting config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {k} TFs, partition has {available}")]
    TooFewTfs { available: usize, k: usize },
    #[error(transparent)]
    Grn(#[from] GrnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Importance of every TF for every target, ordered by target symbol then
/// descending score.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportanceTable {
    entries: Vec<(String, String, f64)>,
}

impl ImportanceTable {
    pub fn entries(&self) -> &[(String, String, f64)] {
        &self.entries
    }

    pub fn score(&self, tf: &str, target: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, g, _)| t == tf && g == target)
            .map(|e| e.2)
    }

    /// `TF\ttarget\timportance` dump.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("TF\ttarget\timportance\n");
        for (tf, target, score) in &self.entries {
            let _ = writeln!(out, "{tf}\t{target}\t{score}");
        }
        out
    }
}

/// Per-target seed, independent of target iteration order.
pub fn target_seed(global: u64, target: &str) -> u64 {
    seed::derive_seed(global, target)
}

pub fn infer_grn(
    train: &ExpressionMatrix,
    partition: &TfPartition,
    k: usize,
    cfg: &GbmConfig,
) -> Result<Grn, InferenceError> {
    infer_grn_with_importances(train, partition, k, cfg).map(|(g, _)| g)
}

pub fn infer_grn_with_importances(
    train: &ExpressionMatrix,
    partition: &TfPartition,
    k: usize,
    cfg: &GbmConfig,
) -> Result<(Grn, ImportanceTable), InferenceError> {
    cfg.validate()?;
    partition.check_within(train.genes())?;
    let tfs: Vec<&String> = partition.tfs().iter().collect();
    if tfs.len() < k {
        return Err(InferenceError::TooFewTfs {
            available: tfs.len(),
            k,
        });
    }
    let tf_cols = train.gene_columns(&tfs)?;
    let features = train.values().select(Axis(1), &tf_cols);

    let targets: Vec<&String> = partition.targets().iter().collect();
    let per_target: Vec<Vec<(usize, f64)>> = targets
        .par_iter()
        .map(|target| {
            let col = train.genes().index_of(target).expect("checked above");
            let cfg = GbmConfig {
                seed: target_seed(cfg.seed, target),
                ..cfg.clone()
            };
            let fit = fit_boosted_trees(features.view(), train.values().column(col), &cfg)?;
            let mut ranked: Vec<(usize, f64)> = fit.importances.into_iter().enumerate().collect();
            // tfs are symbol-sorted, so index order breaks ties by symbol
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Ok(ranked)
        })
        .collect::<Result<_, InferenceError>>()?;

    let mut edges = Vec::with_capacity(targets.len() * k);
    let mut entries = Vec::with_capacity(targets.len() * tfs.len());
    for (target, ranked) in targets.iter().zip(&per_target) {
        for &(j, _) in &ranked[..k] {
            edges.push((tfs[j].as_str(), target.as_str()));
        }
        for &(j, score) in ranked {
            entries.push((tfs[j].clone(), (*target).clone(), score));
        }
    }
    let grn = validate_grn(partition, &edges, k)?;
    Ok((grn, ImportanceTable { entries }))
}
