//! Least-squares gradient boosting with depth-limited regression trees.
//!
//! Trees are grown level by level. Each feature is sorted once per fit, and
//! every level is a single pass over each sorted column that accumulates
//! left-hand sums for all frontier nodes at once.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            subsample_fraction: 0.9,
            seed: 0,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(InferenceError::InvalidConfig(
                "n_trees and max_depth must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "subsample_fraction must be in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    base: f64,
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features);
        self.base + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Vec<f64> {
        let mut buf = vec![0.0; self.n_features];
        features
            .rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, &v)| *b = v);
                self.predict_row(&buf)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BoostedFit {
    pub model: BoostedModel,
    /// Total squared-error reduction contributed by each feature.
    pub importances: Vec<f64>,
    /// Set when the response has zero variance; no trees are grown.
    pub degenerate: bool,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Frontier {
    tree_node: usize,
    sum: f64,
    count: usize,
}

pub fn fit_boosted_trees(
    features: ArrayView2<f64>,
    response: ArrayView1<f64>,
    cfg: &GbmConfig,
) -> Result<BoostedFit, InferenceError> {
    cfg.validate()?;
    let (n, p) = features.dim();
    if response.len() != n {
        return Err(InferenceError::ShapeMismatch(format!(
            "{n} feature rows but {} responses",
            response.len()
        )));
    }
    if n < 2 {
        return Err(InferenceError::ShapeMismatch(format!("need at least 2 rows, got {n}")));
    }
    if p == 0 {
        return Err(InferenceError::ShapeMismatch("no features".into()));
    }
    if features.iter().chain(response.iter()).any(|v| !v.is_finite()) {
        return Err(InferenceError::ShapeMismatch("non-finite input".into()));
    }

    let y: Vec<f64> = response.to_vec();
    let base = y.iter().sum::<f64>() / n as f64;
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Ok(BoostedFit {
            model: BoostedModel {
                base: first,
                trees: Vec::new(),
                n_features: p,
            },
            importances: vec![0.0; p],
            degenerate: true,
        });
    }

    let columns: Vec<Vec<f64>> = (0..p).map(|j| features.column(j).to_vec()).collect();
    let sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let bag_size = ((cfg.subsample_fraction * n as f64).ceil() as usize).clamp(2, n);
    let mut rng = seed::rng(cfg.seed);
    let mut fitted = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut importances = vec![0.0; p];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut in_bag = vec![false; n];
    let mut node_of: Vec<u32> = vec![u32::MAX; n];
    let rows: Vec<Vec<f64>> = features.rows().into_iter().map(|r| r.to_vec()).collect();

    for _ in 0..cfg.n_trees {
        for (r, (yi, fi)) in residual.iter_mut().zip(y.iter().zip(&fitted)) {
            *r = yi - fi;
        }
        in_bag.iter_mut().for_each(|b| *b = bag_size == n);
        if bag_size < n {
            for i in sample(&mut rng, n, bag_size) {
                in_bag[i] = true;
            }
        }
        let tree = grow_tree(
            &columns,
            &sorted,
            &residual,
            &in_bag,
            &mut node_of,
            cfg,
            &mut importances,
        );
        for (f, row) in fitted.iter_mut().zip(&rows) {
            *f += tree.predict(row);
        }
        trees.push(tree);
    }

    Ok(BoostedFit {
        model: BoostedModel {
            base,
            trees,
            n_features: p,
        },
        importances,
        degenerate: false,
    })
}

fn grow_tree(
    columns: &[Vec<f64>],
    sorted: &[Vec<u32>],
    residual: &[f64],
    in_bag: &[bool],
    node_of: &mut [u32],
    cfg: &GbmConfig,
    importances: &mut [f64],
) -> RegressionTree {
    const INACTIVE: u32 = u32::MAX;
    let mut nodes = vec![Node::Leaf(0.0)];
    let (mut sum, mut count) = (0.0, 0);
    for (i, slot) in node_of.iter_mut().enumerate() {
        if in_bag[i] {
            *slot = 0;
            sum += residual[i];
            count += 1;
        } else {
            *slot = INACTIVE;
        }
    }
    let mut frontier = vec![Frontier {
        tree_node: 0,
        sum,
        count,
    }];

    for _depth in 0..cfg.max_depth {
        let m = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; m];
        let mut left_sum = vec![0.0; m];
        let mut left_cnt = vec![0usize; m];
        let mut last = vec![f64::NAN; m];
        for (feature, order) in sorted.iter().enumerate() {
            let col = &columns[feature];
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_cnt.iter_mut().for_each(|v| *v = 0);
            for &i in order {
                let i = i as usize;
                let nd = node_of[i];
                if nd == INACTIVE {
                    continue;
                }
                let nd = nd as usize;
                let x = col[i];
                if left_cnt[nd] > 0 && x > last[nd] {
                    let f = &frontier[nd];
                    let (ls, lc) = (left_sum[nd], left_cnt[nd] as f64);
                    let (rs, rc) = (f.sum - ls, (f.count - left_cnt[nd]) as f64);
                    let gain = ls * ls / lc + rs * rs / rc - f.sum * f.sum / f.count as f64;
                    if gain > 0.0 && best[nd].is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (last[nd] + x);
                        if !(threshold >= last[nd] && threshold < x) {
                            threshold = last[nd];
                        }
                        best[nd] = Some(Candidate {
                            gain,
                            feature,
                            threshold,
                        });
                    }
                }
                left_sum[nd] += residual[i];
                left_cnt[nd] += 1;
                last[nd] = x;
            }
        }

        // children of frontier node `nd` become next-level nodes 2*slot, 2*slot+1
        let mut next = Vec::new();
        let mut remap = vec![(INACTIVE, INACTIVE); m];
        for (nd, cand) in best.iter().enumerate() {
            let f = &frontier[nd];
            match cand {
                Some(c) => {
                    importances[c.feature] += c.gain;
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[f.tree_node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    remap[nd] = (next.len() as u32, next.len() as u32 + 1);
                    next.push(Frontier {
                        tree_node: left,
                        sum: 0.0,
                        count: 0,
                    });
                    next.push(Frontier {
                        tree_node: left + 1,
                        sum: 0.0,
                        count: 0,
                    });
                }
                None => {
                    nodes[f.tree_node] = Node::Leaf(cfg.learning_rate * f.sum / f.count as f64);
                }
            }
        }
        if next.is_empty() {
            return RegressionTree { nodes };
        }
        for (i, slot) in node_of.iter_mut().enumerate() {
            if *slot == INACTIVE {
                continue;
            }
            let nd = *slot as usize;
            let (l, r) = remap[nd];
            if l == INACTIVE {
                *slot = INACTIVE;
                continue;
            }
            let c = best[nd].expect("split chosen");
            let child = if columns[c.feature][i] <= c.threshold { l } else { r };
            *slot = child;
            next[child as usize].sum += residual[i];
            next[child as usize].count += 1;
        }
        frontier = next;
    }
    for f in &frontier {
        nodes[f.tree_node] = Node::Leaf(cfg.learning_rate * f.sum / f.count as f64);
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    fn noise_features(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>())
    }

    #[test]
    fn zero_response_is_degenerate() {
        let x = noise_features(50, 4, 1);
        let y = Array1::zeros(50);
        let fit = fit_boosted_trees(x.view(), y.view(), &GbmConfig::default()).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.importances, vec![0.0; 4]);
        assert_eq!(fit.model.predict_row(&[0.3; 4]), 0.0);
    }

    #[test]
    fn copied_column_dominates() {
        let x = noise_features(300, 6, 2);
        let y = x.column(4).to_owned();
        let fit = fit_boosted_trees(x.view(), y.view(), &GbmConfig::default()).unwrap();
        let top = fit.importances[4];
        for (j, &imp) in fit.importances.iter().enumerate() {
            if j != 4 {
                assert!(top > imp, "feature {j}: {imp} >= {top}");
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let x = noise_features(120, 5, 3);
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] * 2.0 + r[1]).collect();
        let cfg = GbmConfig {
            seed: 99,
            ..GbmConfig::default()
        };
        let a = fit_boosted_trees(x.view(), y.view(), &cfg).unwrap();
        let b = fit_boosted_trees(x.view(), y.view(), &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.importances), bits(&b.importances));
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn fits_a_step_function() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y: Array1<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 5.0 }).collect();
        let cfg = GbmConfig {
            n_trees: 200,
            learning_rate: 0.5,
            subsample_fraction: 1.0,
            ..GbmConfig::default()
        };
        let fit = fit_boosted_trees(x.view(), y.view(), &cfg).unwrap();
        assert!((fit.model.predict_row(&[3.0]) - 1.0).abs() < 1e-6);
        assert!((fit.model.predict_row(&[30.0]) - 5.0).abs() < 1e-6);
        // the split lands halfway between 19 and 20
        assert!((fit.model.predict_row(&[19.4]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_and_config_errors() {
        let x = noise_features(10, 2, 0);
        let y = Array1::zeros(9);
        assert!(matches!(
            fit_boosted_trees(x.view(), y.view(), &GbmConfig::default()),
            Err(InferenceError::ShapeMismatch(_))
        ));
        let y = Array1::zeros(10);
        let bad = GbmConfig {
            learning_rate: 0.0,
            ..GbmConfig::default()
        };
        assert!(matches!(
            fit_boosted_trees(x.view(), y.view(), &bad),
            Err(InferenceError::InvalidConfig(_))
        ));
    }
}
