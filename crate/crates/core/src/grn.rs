//! Bipartite gene regulatory networks.
//!
//! A [`Grn`] is a set of directed TF → target edges over a [`TfPartition`] in
//! which every target has exactly `k` distinct regulators. All edges point from
//! the TF side to the target side, so the graph is acyclic by construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum GrnError {
    #[error("unknown gene symbol `{0}`")]
    UnknownSymbol(String),
    #[error("target `{target}` has {found} regulators, expected {expected}")]
    WrongArity {
        target: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate edge {tf} -> {target}")]
    DuplicateEdge { tf: String, target: String },
    #[error("edge {tf} -> {target} violates the TF/target sides of the partition")]
    SideViolation { tf: String, target: String },
    #[error("need at least {k} TFs, partition has {available}")]
    TooFewTfs { available: usize, k: usize },
    #[error("GRNs do not share the same partition and regulator count")]
    PartitionMismatch,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("duplicate gene symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("empty gene symbol")]
    EmptySymbol,
    #[error("regulators per target must be positive")]
    ZeroK,
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trims surrounding whitespace and uppercases a gene symbol.
pub fn normalize_symbol(raw: &str) -> String {
    raw.trim().to_uppercase()
}

/// Ordered set of normalized gene symbols; positions define matrix columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneVocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl GeneVocabulary {
    pub fn new<I, S>(symbols: I) -> Result<Self, GrnError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for raw in symbols {
            let sym = normalize_symbol(raw.as_ref());
            if sym.is_empty() {
                return Err(GrnError::EmptySymbol);
            }
            if index.insert(sym.clone(), out.len()).is_some() {
                return Err(GrnError::DuplicateSymbol(sym));
            }
            out.push(sym);
        }
        Ok(Self {
            symbols: out,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    /// Vocabulary restricted to the given column positions, in that order.
    pub fn select(&self, columns: &[usize]) -> Self {
        let symbols: Vec<String> = columns.iter().map(|&c| self.symbols[c].clone()).collect();
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self { symbols, index }
    }

    /// Stable digest of the ordered symbol list.
    pub fn digest(&self) -> String {
        seed::sha256_hex(self.symbols.join("\n").as_bytes())
    }
}

impl Serialize for GeneVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.symbols.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeneVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let symbols = Vec::<String>::deserialize(d)?;
        GeneVocabulary::new(symbols).map_err(serde::de::Error::custom)
    }
}

/// Disjoint split of genes into transcription factors and targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfPartition {
    tfs: BTreeSet<String>,
    targets: BTreeSet<String>,
}

impl TfPartition {
    pub fn new<I, J, S, T>(tfs: I, targets: J) -> Result<Self, GrnError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let tfs: BTreeSet<String> = tfs.into_iter().map(|s| normalize_symbol(s.as_ref())).collect();
        let targets: BTreeSet<String> = targets
            .into_iter()
            .map(|s| normalize_symbol(s.as_ref()))
            .collect();
        if tfs.is_empty() {
            return Err(GrnError::InvalidPartition("no transcription factors".into()));
        }
        if targets.is_empty() {
            return Err(GrnError::InvalidPartition("no target genes".into()));
        }
        if tfs.iter().chain(targets.iter()).any(|s| s.is_empty()) {
            return Err(GrnError::EmptySymbol);
        }
        if let Some(both) = tfs.intersection(&targets).next() {
            return Err(GrnError::InvalidPartition(format!(
                "`{both}` is both a TF and a target"
            )));
        }
        Ok(Self { tfs, targets })
    }

    /// Splits a vocabulary: members of `tf_symbols` found in the vocabulary
    /// become TFs, every other vocabulary gene becomes a target.
    pub fn from_vocabulary<I, S>(vocab: &GeneVocabulary, tf_symbols: I) -> Result<Self, GrnError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let wanted: HashSet<String> = tf_symbols
            .into_iter()
            .map(|s| normalize_symbol(s.as_ref()))
            .collect();
        let (tfs, targets): (Vec<&String>, Vec<&String>) =
            vocab.symbols().iter().partition(|s| wanted.contains(*s));
        Self::new(tfs, targets)
    }

    pub fn tfs(&self) -> &BTreeSet<String> {
        &self.tfs
    }

    pub fn targets(&self) -> &BTreeSet<String> {
        &self.targets
    }

    pub fn is_tf(&self, symbol: &str) -> bool {
        self.tfs.contains(symbol)
    }

    pub fn is_target(&self, symbol: &str) -> bool {
        self.targets.contains(symbol)
    }

    /// Errors unless every partition symbol is in `vocab`.
    pub fn check_within(&self, vocab: &GeneVocabulary) -> Result<(), GrnError> {
        match self.tfs.iter().chain(&self.targets).find(|s| !vocab.contains(s)) {
            Some(s) => Err(GrnError::UnknownSymbol(s.clone())),
            None => Ok(()),
        }
    }
}

/// Bipartite TF → target graph with exactly `k` regulators per target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grn {
    partition: TfPartition,
    regulators: BTreeMap<String, Vec<String>>,
    k: usize,
}

impl Grn {
    pub fn partition(&self) -> &TfPartition {
        &self.partition
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Regulators of `target`, sorted by symbol.
    pub fn regulators_of(&self, target: &str) -> Option<&[String]> {
        self.regulators.get(target).map(Vec::as_slice)
    }

    pub fn regulators(&self) -> &BTreeMap<String, Vec<String>> {
        &self.regulators
    }

    pub fn n_edges(&self) -> usize {
        self.regulators.len() * self.k
    }

    /// Edges as `(tf, target)` in target order, then regulator order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.regulators
            .iter()
            .flat_map(|(t, regs)| regs.iter().map(move |r| (r.as_str(), t.as_str())))
    }

    /// Tab-separated edge list with a `TF\ttarget` header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("TF\ttarget\n");
        for (tf, target) in self.edges() {
            let _ = writeln!(out, "{tf}\t{target}");
        }
        out
    }

    pub fn sidecar(&self) -> GrnSidecar {
        GrnSidecar {
            k: self.k,
            tfs: self.partition.tfs.iter().cloned().collect(),
            targets: self.partition.targets.iter().cloned().collect(),
        }
    }

    pub fn from_tsv(sidecar: &GrnSidecar, tsv: &str) -> Result<Self, GrnError> {
        let partition = TfPartition::new(&sidecar.tfs, &sidecar.targets)?;
        let edges = parse_edge_tsv(tsv, "<memory>")?;
        validate_grn(&partition, &edges, sidecar.k)
    }
}

/// Partition metadata stored next to a GRN edge list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrnSidecar {
    pub k: usize,
    pub tfs: Vec<String>,
    pub targets: Vec<String>,
}

/// Validates an edge list against a partition and builds a [`Grn`].
pub fn validate_grn<S: AsRef<str>>(
    partition: &TfPartition,
    edges: &[(S, S)],
    k: usize,
) -> Result<Grn, GrnError> {
    if k == 0 {
        return Err(GrnError::ZeroK);
    }
    let mut regulators: BTreeMap<String, Vec<String>> = partition
        .targets
        .iter()
        .map(|t| (t.clone(), Vec::with_capacity(k)))
        .collect();
    let mut seen = HashSet::new();
    for (tf, target) in edges {
        let tf = normalize_symbol(tf.as_ref());
        let target = normalize_symbol(target.as_ref());
        let tf_known = partition.is_tf(&tf) || partition.is_target(&tf);
        let target_known = partition.is_tf(&target) || partition.is_target(&target);
        if !tf_known {
            return Err(GrnError::UnknownSymbol(tf));
        }
        if !target_known {
            return Err(GrnError::UnknownSymbol(target));
        }
        if !partition.is_tf(&tf) || !partition.is_target(&target) {
            return Err(GrnError::SideViolation { tf, target });
        }
        if !seen.insert((tf.clone(), target.clone())) {
            return Err(GrnError::DuplicateEdge { tf, target });
        }
        regulators
            .get_mut(&target)
            .expect("target present in partition")
            .push(tf);
    }
    for (target, regs) in regulators.iter_mut() {
        if regs.len() != k {
            return Err(GrnError::WrongArity {
                target: target.clone(),
                expected: k,
                found: regs.len(),
            });
        }
        regs.sort();
    }
    Ok(Grn {
        partition: partition.clone(),
        regulators,
        k,
    })
}

/// Assigns each target `k` distinct TFs drawn uniformly without replacement.
pub fn random_grn(partition: &TfPartition, k: usize, seed: u64) -> Result<Grn, GrnError> {
    if k == 0 {
        return Err(GrnError::ZeroK);
    }
    let tfs: Vec<&String> = partition.tfs.iter().collect();
    if tfs.len() < k {
        return Err(GrnError::TooFewTfs {
            available: tfs.len(),
            k,
        });
    }
    let mut rng = seed::rng(seed);
    let regulators = partition
        .targets
        .iter()
        .map(|target| {
            let mut picks = sample(&mut rng, tfs.len(), k).into_vec();
            picks.sort_unstable();
            let regs = picks.into_iter().map(|i| tfs[i].clone()).collect();
            (target.clone(), regs)
        })
        .collect();
    Ok(Grn {
        partition: partition.clone(),
        regulators,
        k,
    })
}

/// Fraction of `a`'s edges that also appear in `b`.
pub fn overlap(a: &Grn, b: &Grn) -> Result<f64, GrnError> {
    if a.partition != b.partition || a.k != b.k {
        return Err(GrnError::PartitionMismatch);
    }
    let shared: usize = a
        .regulators
        .iter()
        .map(|(target, regs)| {
            let other = &b.regulators[target];
            // both sides sorted
            let (mut i, mut j, mut n) = (0, 0, 0);
            while i < regs.len() && j < other.len() {
                match regs[i].cmp(&other[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        n += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            n
        })
        .sum();
    Ok(shared as f64 / a.n_edges() as f64)
}

/// Edge count over the number of possible TF → target edges.
pub fn density(grn: &Grn) -> f64 {
    let possible = grn.partition.tfs.len() * grn.partition.targets.len();
    grn.n_edges() as f64 / possible as f64
}

/// Path of the JSON sidecar for a GRN edge list (`grn.tsv` → `grn.json`).
pub fn sidecar_path(tsv_path: &Path) -> PathBuf {
    tsv_path.with_extension("json")
}

pub fn write_grn(grn: &Grn, tsv_path: &Path) -> Result<(), GrnError> {
    if let Some(dir) = tsv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(tsv_path, grn.to_tsv())?;
    let json = serde_json::to_string_pretty(&grn.sidecar()).expect("sidecar serializes");
    std::fs::write(sidecar_path(tsv_path), json + "\n")?;
    Ok(())
}

pub fn read_grn(tsv_path: &Path) -> Result<Grn, GrnError> {
    let side_path = sidecar_path(tsv_path);
    let side_text = std::fs::read_to_string(&side_path)?;
    let sidecar: GrnSidecar = serde_json::from_str(&side_text).map_err(|e| GrnError::Format {
        path: side_path.display().to_string(),
        msg: e.to_string(),
    })?;
    let tsv = std::fs::read_to_string(tsv_path)?;
    let partition = TfPartition::new(&sidecar.tfs, &sidecar.targets)?;
    let edges = parse_edge_tsv(&tsv, &tsv_path.display().to_string())?;
    validate_grn(&partition, &edges, sidecar.k)
}

fn parse_edge_tsv(text: &str, origin: &str) -> Result<Vec<(String, String)>, GrnError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == "TF\ttarget" => {}
        _ => {
            return Err(GrnError::Format {
                path: origin.to_string(),
                msg: "expected header `TF\\ttarget`".into(),
            })
        }
    }
    let mut edges = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(tf), Some(target), None) => edges.push((tf.to_string(), target.to_string())),
            _ => {
                return Err(GrnError::Format {
                    path: origin.to_string(),
                    msg: format!("line {}: expected two tab-separated fields", n + 2),
                })
            }
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab_x() -> TfPartition {
        TfPartition::new(["A", "B"], ["X"]).unwrap()
    }

    fn synthetic_partition(n_tfs: usize, n_targets: usize) -> TfPartition {
        TfPartition::new(
            (0..n_tfs).map(|i| format!("TF{i:03}")),
            (0..n_targets).map(|i| format!("G{i:04}")),
        )
        .unwrap()
    }

    #[test]
    fn minimal_valid_grn() {
        let g = validate_grn(&ab_x(), &[("A", "X"), ("B", "X")], 2).unwrap();
        assert_eq!(g.regulators_of("X").unwrap(), ["A", "B"]);
        assert_eq!(g.n_edges(), 2);
    }

    #[test]
    fn regulators_are_sorted_and_normalized() {
        let g = validate_grn(&ab_x(), &[(" b", "x"), ("a ", "X")], 2).unwrap();
        assert_eq!(g.regulators_of("X").unwrap(), ["A", "B"]);
    }

    #[test]
    fn arity_violation() {
        let err = validate_grn(&ab_x(), &[("A", "X")], 2).unwrap_err();
        assert!(matches!(err, GrnError::WrongArity { found: 1, expected: 2, .. }));
    }

    #[test]
    fn reversed_edge_is_side_violation() {
        let err = validate_grn(&ab_x(), &[("X", "A")], 1).unwrap_err();
        assert!(matches!(err, GrnError::SideViolation { .. }));
    }

    #[test]
    fn unknown_and_duplicate_edges() {
        let err = validate_grn(&ab_x(), &[("Q", "X")], 1).unwrap_err();
        assert!(matches!(err, GrnError::UnknownSymbol(s) if s == "Q"));
        let err = validate_grn(&ab_x(), &[("A", "X"), ("a", "X")], 2).unwrap_err();
        assert!(matches!(err, GrnError::DuplicateEdge { .. }));
    }

    #[test]
    fn partition_invariants() {
        assert!(TfPartition::new(["A"], ["A"]).is_err());
        assert!(TfPartition::new(Vec::<&str>::new(), ["A"]).is_err());
        assert!(TfPartition::new(["A"], Vec::<&str>::new()).is_err());
        let vocab = GeneVocabulary::new(["a", "b", "c"]).unwrap();
        let p = TfPartition::from_vocabulary(&vocab, ["B", "zzz"]).unwrap();
        assert_eq!(p.tfs().iter().collect::<Vec<_>>(), ["B"]);
        assert_eq!(p.targets().len(), 2);
        p.check_within(&vocab).unwrap();
    }

    #[test]
    fn vocabulary_rejects_duplicates_after_normalization() {
        assert!(matches!(
            GeneVocabulary::new(["Gata1", " GATA1 "]),
            Err(GrnError::DuplicateSymbol(_))
        ));
        let v = GeneVocabulary::new(["x", "y"]).unwrap();
        assert_eq!(v.index_of("Y"), Some(1));
    }

    #[test]
    fn random_grn_pbmc_shape() {
        let p = synthetic_partition(75, 925);
        let g = random_grn(&p, 10, 3).unwrap();
        assert_eq!(g.n_edges(), 9250);
        assert!((density(&g) - 0.1333).abs() < 5e-5);
    }

    #[test]
    fn random_grn_is_deterministic() {
        let p = synthetic_partition(12, 30);
        let a = random_grn(&p, 4, 7).unwrap();
        let b = random_grn(&p, 4, 7).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_ne!(a, random_grn(&p, 4, 8).unwrap());
    }

    #[test]
    fn random_grn_needs_enough_tfs() {
        let p = synthetic_partition(5, 3);
        assert!(matches!(
            random_grn(&p, 10, 0),
            Err(GrnError::TooFewTfs { available: 5, k: 10 })
        ));
    }

    #[test]
    fn overlap_identity_and_disjoint() {
        let p = TfPartition::new(["A", "B", "C", "D"], ["X", "Y"]).unwrap();
        let g = validate_grn(&p, &[("A", "X"), ("B", "X"), ("A", "Y"), ("B", "Y")], 2).unwrap();
        let h = validate_grn(&p, &[("C", "X"), ("D", "X"), ("C", "Y"), ("D", "Y")], 2).unwrap();
        assert_eq!(overlap(&g, &g).unwrap(), 1.0);
        assert_eq!(overlap(&g, &h).unwrap(), 0.0);
        let q = TfPartition::new(["A", "B", "C", "D"], ["X"]).unwrap();
        let other = validate_grn(&q, &[("A", "X"), ("B", "X")], 2).unwrap();
        assert!(matches!(overlap(&g, &other), Err(GrnError::PartitionMismatch)));
    }

    #[test]
    fn density_table_rows() {
        for (tfs, targets, expected) in [(75, 925, 0.1333), (65, 935, 0.1538), (1, 4, 1.0)] {
            let k = if tfs == 1 { 1 } else { 10 };
            let g = random_grn(&synthetic_partition(tfs, targets), k, 1).unwrap();
            assert!((density(&g) - expected).abs() < 5e-5, "{tfs}/{targets}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grn.tsv");
        let g = random_grn(&synthetic_partition(8, 20), 3, 11).unwrap();
        write_grn(&g, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(read_grn(&path).unwrap(), g);
        assert_eq!(Grn::from_tsv(&g.sidecar(), &g.to_tsv()).unwrap(), g);
    }

    #[test]
    fn malformed_tsv_rejected() {
        let side = GrnSidecar {
            k: 1,
            tfs: vec!["A".into()],
            targets: vec!["X".into()],
        };
        assert!(matches!(
            Grn::from_tsv(&side, "tf\ttarget\nA\tX\n"),
            Err(GrnError::Format { .. })
        ));
        assert!(matches!(
            Grn::from_tsv(&side, "TF\ttarget\nA X\n"),
            Err(GrnError::Format { .. })
        ));
    }
}
