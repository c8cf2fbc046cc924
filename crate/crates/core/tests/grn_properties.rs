use std::collections::HashMap;

use grnkit::grn::{density, overlap, random_grn, read_grn, validate_grn, write_grn, TfPartition};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn partition(n_tfs: usize, n_targets: usize) -> TfPartition {
    TfPartition::new(
        (0..n_tfs).map(|i| format!("TF{i:02}")),
        (0..n_targets).map(|i| format!("T{i:02}")),
    )
    .unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..25, 1usize..25, any::<u64>()).prop_flat_map(|(tfs, targets, seed)| (Just(tfs), Just(targets), 1..=tfs, Just(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_graphs_are_valid((tfs, targets, k, seed) in shape()) {
        let p = partition(tfs, targets);
        let g = random_grn(&p, k, seed).unwrap();
        let edges: Vec<(&str, &str)> = g.edges().collect();
        let again = validate_grn(&p, &edges, k).unwrap();
        prop_assert_eq!(&again, &g);
        prop_assert_eq!(g.n_edges(), k * targets);
        prop_assert_eq!(density(&g), k as f64 / tfs as f64);
        prop_assert_eq!(overlap(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn overlap_is_symmetric((tfs, targets, k, seed) in shape()) {
        let p = partition(tfs, targets);
        let a = random_grn(&p, k, seed).unwrap();
        let b = random_grn(&p, k, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(overlap(&a, &b).unwrap(), overlap(&b, &a).unwrap());
    }

    #[test]
    fn files_round_trip((tfs, targets, k, seed) in shape()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        let g = random_grn(&partition(tfs, targets), k, seed).unwrap();
        write_grn(&g, &path).unwrap();
        prop_assert_eq!(read_grn(&path).unwrap(), g);
    }
}

#[test]
fn edge_frequencies_match_uniform_choice() {
    // every (tf, target) cell should be hit with probability k / |tfs|
    let (n_tfs, n_targets, k, draws) = (8, 5, 3, 2_000u64);
    let p = partition(n_tfs, n_targets);
    let mut counts: HashMap<(String, String), f64> = HashMap::new();
    for seed in 0..draws {
        for (tf, t) in random_grn(&p, k, seed).unwrap().edges() {
            *counts.entry((tf.to_string(), t.to_string())).or_default() += 1.0;
        }
    }
    // per target, regulator counts over `draws` graphs: draws * k picks spread
    // over n_tfs cells, df = n_tfs - 1 per target
    let expected = draws as f64 * k as f64 / n_tfs as f64;
    let mut stat = 0.0;
    for tf in p.tfs() {
        for t in p.targets() {
            let o = counts.get(&(tf.clone(), t.clone())).copied().unwrap_or(0.0);
            stat += (o - expected).powi(2) / expected;
        }
    }
    // sampling without replacement shrinks the variance by (n - k) / (n - 1),
    // which keeps the plain statistic conservative
    let df = (n_targets * (n_tfs - 1)) as f64;
    let crit = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    assert!(draws * (n_targets as u64) >= 10_000);
    assert!(stat < crit, "chi-square {stat:.1} >= {crit:.1}");
}
