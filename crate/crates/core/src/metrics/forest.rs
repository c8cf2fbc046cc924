//! Bagged random-forest classifier used to tell real cells from synthetic
//! ones. Gini splits, `sqrt(p)` candidate features per node.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auroc, check_pair, MeanStd, MetricError};
use crate::expression::ExpressionMatrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `sqrt(p)`.
    pub max_features: Option<usize>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_leaf: 1,
            max_features: None,
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: ndarray::ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [bool],
    mtry: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf(pos as f64 / n as f64));
        if depth >= self.cfg.max_depth || pos == 0 || pos == n || n < 2 * self.cfg.min_samples_leaf {
            return me;
        }
        let p = self.x.ncols();
        let parent_impurity = gini(pos as f64, n as f64);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, bool)> = Vec::with_capacity(n);
        for feature in sample(&mut *rng, p, self.mtry) {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.x[[i, feature]], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0usize;
            for s in 1..n {
                left_pos += usize::from(vals[s - 1].1);
                if vals[s].0 <= vals[s - 1].0 {
                    continue;
                }
                if s < self.cfg.min_samples_leaf || n - s < self.cfg.min_samples_leaf {
                    continue;
                }
                let (nl, nr) = (s as f64, (n - s) as f64);
                let child = (nl * gini(left_pos as f64, nl) + nr * gini((pos - left_pos) as f64, nr)) / n as f64;
                let decrease = parent_impurity - child;
                if decrease > 1e-12 && best.is_none_or(|b| decrease > b.0) {
                    let mut threshold = 0.5 * (vals[s - 1].0 + vals[s].0);
                    if !(threshold >= vals[s - 1].0 && threshold < vals[s].0) {
                        threshold = vals[s - 1].0;
                    }
                    best = Some((decrease, feature, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return me;
        };
        let mut split = 0;
        for j in 0..n {
            if self.x[[idx[j], feature]] <= threshold {
                idx.swap(split, j);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

impl RandomForest {
    pub fn fit(x: ArrayView2<f64>, y: &[bool], cfg: &ForestConfig) -> Result<Self, MetricError> {
        if x.nrows() != y.len() {
            return Err(MetricError::LengthMismatch(format!("{} rows, {} labels", x.nrows(), y.len())));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(MetricError::EmptyMatrix);
        }
        if cfg.n_trees == 0 || cfg.max_depth == 0 || cfg.min_samples_leaf == 0 {
            return Err(MetricError::InvalidConfig(
                "n_trees, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        let p = x.ncols();
        let mtry = cfg
            .max_features
            .unwrap_or_else(|| (p as f64).sqrt().round() as usize)
            .clamp(1, p);
        let n = x.nrows();
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive_seed_indexed(cfg.seed, "tree", t));
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut g = Grower {
                    x,
                    y,
                    mtry,
                    cfg,
                    nodes: Vec::new(),
                };
                g.grow(&mut idx, 0, &mut rng);
                Tree { nodes: g.nodes }
            })
            .collect();
        Ok(Self { trees })
    }

    /// Mean leaf probability of the positive class over all trees.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64)
            .collect()
    }
}

/// Stratified split: returns (train, test) row indices.
fn stratified_split(y: &[bool], test_fraction: f64, rng: &mut seed::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(rng);
        let n_test = ((rows.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Held-out AUROC of a forest separating real (positive) from synthetic
/// cells, over `repeats` seeded splits.
pub fn rf_auroc(
    r: &ExpressionMatrix,
    s: &ExpressionMatrix,
    cfg: &ForestConfig,
    repeats: usize,
) -> Result<MeanStd, MetricError> {
    check_pair(r, s)?;
    const MIN_CELLS: usize = 20;
    let smallest = r.n_cells().min(s.n_cells());
    if smallest < MIN_CELLS {
        return Err(MetricError::TooFewCells {
            need: MIN_CELLS,
            have: smallest,
        });
    }
    if repeats == 0 || !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(MetricError::InvalidConfig("need repeats >= 1 and test_fraction in (0,1)".into()));
    }
    let x: Array2<f64> =
        ndarray::concatenate(Axis(0), &[r.values().view(), s.values().view()]).expect("same genes");
    let y: Vec<bool> = (0..x.nrows()).map(|i| i < r.n_cells()).collect();
    let scores: Vec<f64> = (0..repeats)
        .map(|rep| {
            let rep_seed = seed::derive_seed_indexed(cfg.seed, "rf-repeat", rep);
            let mut rng = seed::rng(rep_seed);
            let (train, test) = stratified_split(&y, cfg.test_fraction, &mut rng);
            let xt = x.select(Axis(0), &train);
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let forest = RandomForest::fit(
                xt.view(),
                &yt,
                &ForestConfig {
                    seed: rep_seed,
                    ..cfg.clone()
                },
            )?;
            let xe = x.select(Axis(0), &test);
            let ye: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            auroc(&forest.predict_proba(xe.view()), &ye)
        })
        .collect::<Result<_, _>>()?;
    Ok(MeanStd::from_samples(&scores))
}
