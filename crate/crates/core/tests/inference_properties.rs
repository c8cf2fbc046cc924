use grnkit::expression::{ExpressionMatrix, Scale};
use grnkit::grn::{overlap, GeneVocabulary, TfPartition};
use grnkit::inference::{fit_boosted_trees, infer_grn, infer_grn_with_importances, GbmConfig};
use grnkit::seed::rng;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn noisy_linear(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, p), |_| r.random::<f64>());
    let y = x.rows().into_iter().map(|row| 1.0 + 2.0 * row[0] - row[1] + 0.1 * r.random::<f64>()).collect();
    (x, y)
}

#[test]
fn shifting_the_response_keeps_selected_edges() {
    let mut r = rng(2);
    let n = 300;
    let tf = Array2::from_shape_fn((n, 6), |_| r.random::<f64>());
    let mut values = Array2::zeros((n, 8));
    values.slice_mut(ndarray::s![.., ..6]).assign(&tf);
    for i in 0..n {
        values[[i, 6]] = tf[[i, 0]] + 0.5 * tf[[i, 3]] + 0.05 * r.random::<f64>();
        values[[i, 7]] = tf[[i, 2]] * tf[[i, 4]] + 0.05 * r.random::<f64>();
    }
    let names = ["A", "B", "C", "D", "E", "F", "X", "Y"];
    let partition = TfPartition::new(&names[..6], &names[6..]).unwrap();
    let cfg = GbmConfig { seed: 3, ..Default::default() };
    let m = |v: Array2<f64>| ExpressionMatrix::from_rows(v, GeneVocabulary::new(names).unwrap(), Scale::Raw).unwrap();
    let base = infer_grn(&m(values.clone()), &partition, 2, &cfg).unwrap();
    let mut shifted = values;
    shifted.slice_mut(ndarray::s![.., 6..]).mapv_inplace(|v| v + 64.0);
    let moved = infer_grn(&m(shifted), &partition, 2, &cfg).unwrap();
    assert_eq!(base, moved);
    assert_eq!(base.regulators_of("X").unwrap(), ["A", "D"]);
    assert_eq!(base.regulators_of("Y").unwrap(), ["C", "E"]);
}

#[test]
fn vocabulary_order_does_not_change_the_graph() {
    let (x, y) = noisy_linear(5, 200, 5);
    let names = ["T0", "T1", "T2", "T3", "T4", "G"];
    let mut values = Array2::zeros((200, 6));
    values.slice_mut(ndarray::s![.., ..5]).assign(&x);
    values.column_mut(5).assign(&y);
    let partition = TfPartition::new(&names[..5], ["G"]).unwrap();
    let cfg = GbmConfig { seed: 9, ..Default::default() };
    let m = ExpressionMatrix::from_rows(values.clone(), GeneVocabulary::new(names).unwrap(), Scale::Raw).unwrap();
    let (g, imp) = infer_grn_with_importances(&m, &partition, 2, &cfg).unwrap();

    let order = [5, 2, 0, 4, 1, 3];
    let shuffled_names: Vec<&str> = order.iter().map(|&i| names[i]).collect();
    let m2 = ExpressionMatrix::from_rows(
        values.select(Axis(1), &order),
        GeneVocabulary::new(shuffled_names).unwrap(),
        Scale::Raw,
    )
    .unwrap();
    let (g2, imp2) = infer_grn_with_importances(&m2, &partition, 2, &cfg).unwrap();
    assert_eq!(g, g2);
    assert!(imp.entries().iter().all(|(_, _, v)| v.is_finite() && *v >= 0.0));
    for tf in &names[..5] {
        assert_eq!(imp.score(tf, "G"), imp2.score(tf, "G"));
    }
}

/// Exhaustive search over midpoint thresholds for the squared-error stump.
fn oracle_stump(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sse = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let mut best = (sse(y.as_slice().unwrap()), usize::MAX, 0.0);
    for f in 0..x.ncols() {
        let mut vals: Vec<f64> = x.column(f).to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<f64>, Vec<f64>) = (0..y.len())
                .map(|i| (x[[i, f]] <= t, y[i]))
                .fold((vec![], vec![]), |(mut l, mut r), (left, v)| {
                    if left { l.push(v) } else { r.push(v) }
                    (l, r)
                });
            let total = sse(&l) + sse(&r);
            if total < best.0 - 1e-12 {
                best = (total, f, t);
            }
        }
    }
    let (_, f, t) = best;
    let left: Vec<f64> = (0..y.len()).filter(|&i| x[[i, f]] <= t).map(|i| y[i]).collect();
    let right: Vec<f64> = (0..y.len()).filter(|&i| x[[i, f]] > t).map(|i| y[i]).collect();
    let (ml, mr) = (mean(&left), mean(&right));
    (0..y.len()).map(|i| if x[[i, f]] <= t { ml } else { mr }).collect()
}

#[test]
fn single_stump_matches_exhaustive_search() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let n = r.random_range(5..40);
        let x = Array2::from_shape_fn((n, 3), |_| (r.random::<f64>() * 20.0).round());
        let y: Array1<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let cfg = GbmConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, subsample_fraction: 1.0, seed };
        let fit = fit_boosted_trees(x.view(), y.view(), &cfg).unwrap();
        let got = fit.model.predict(x.view());
        let want = oracle_stump(&x, &y);
        let got_sse: f64 = got.iter().zip(y.iter()).map(|(p, v)| (p - v).powi(2)).sum();
        let want_sse: f64 = want.iter().zip(y.iter()).map(|(p, v)| (p - v).powi(2)).sum();
        assert!((got_sse - want_sse).abs() < 1e-9, "seed {seed}: {got_sse} vs {want_sse}");
    }
}

#[test]
fn pure_noise_selects_tfs_uniformly() {
    let (p, reps) = (6, 600);
    let mut counts = vec![0.0; p];
    let names: Vec<String> = (0..p).map(|i| format!("TF{i}")).chain(["G".to_string()]).collect();
    let partition = TfPartition::new(&names[..p], ["G"]).unwrap();
    let vocab = GeneVocabulary::new(&names).unwrap();
    for rep in 0..reps {
        let mut r = rng(7_000 + rep);
        let values = Array2::from_shape_fn((60, p + 1), |_| r.random::<f64>());
        let m = ExpressionMatrix::from_rows(values, vocab.clone(), Scale::Raw).unwrap();
        let cfg = GbmConfig { n_trees: 10, seed: rep, ..Default::default() };
        let g = infer_grn(&m, &partition, 1, &cfg).unwrap();
        let tf = &g.regulators_of("G").unwrap()[0];
        counts[names.iter().position(|n| n == tf).unwrap()] += 1.0;
    }
    let expected = reps as f64 / p as f64;
    let stat: f64 = counts.iter().map(|o| (o - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new((p - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < crit, "counts {counts:?}, chi-square {stat:.1} >= {crit:.1}");
}

#[test]
fn recovers_planted_regulators() {
    let mut r = rng(11);
    let n = 400;
    let mut values = Array2::from_shape_fn((n, 12), |_| r.random::<f64>());
    let planted = [[0, 1], [2, 3], [4, 5], [6, 7]];
    for (t, pair) in planted.iter().enumerate() {
        for i in 0..n {
            values[[i, 8 + t]] = values[[i, pair[0]]] + values[[i, pair[1]]] + 0.05 * r.random::<f64>();
        }
    }
    let mut names: Vec<String> = (0..8).map(|i| format!("TF{i}")).collect();
    names.extend((0..4).map(|i| format!("G{i}")));
    let partition = TfPartition::new(&names[..8], &names[8..]).unwrap();
    let m = ExpressionMatrix::from_rows(values, GeneVocabulary::new(&names).unwrap(), Scale::Raw).unwrap();
    let g = infer_grn(&m, &partition, 2, &GbmConfig::default()).unwrap();
    let truth = grnkit::grn::validate_grn(
        &partition,
        &planted
            .iter()
            .enumerate()
            .flat_map(|(t, pair)| pair.iter().map(move |&j| (format!("TF{j}"), format!("G{t}"))))
            .collect::<Vec<_>>(),
        2,
    )
    .unwrap();
    assert_eq!(overlap(&g, &truth).unwrap(), 1.0);

    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut r);
    let reordered = m.select_cells(&rows);
    let cfg = GbmConfig { subsample_fraction: 1.0, ..Default::default() };
    assert_eq!(
        infer_grn(&reordered, &partition, 2, &cfg).unwrap(),
        infer_grn(&m, &partition, 2, &cfg).unwrap()
    );
}
