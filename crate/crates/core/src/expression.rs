//! Single-cell expression matrices: loading, gene filtering, splits,
//! library-size normalization and centroids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grn::{GeneVocabulary, GrnError};
use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("duplicate gene symbol `{0}`")]
    DuplicateGene(String),
    #[error("negative value {value} at cell {row}, gene {col}")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("non-finite value at cell {row}, gene {col}")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need more than {need} cells, have {have}")]
    TooFewCells { need: usize, have: usize },
    #[error("only {have} genes pass the expression filter, need {need}")]
    TooFewGenes { need: usize, have: usize },
    #[error("cell `{0}` has zero total count")]
    ZeroLibrary(String),
    #[error("matrix has no cells")]
    EmptyMatrix,
    #[error("operation requires raw counts")]
    NotRaw,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("gene `{0}` not in matrix")]
    UnknownGene(String),
    #[error(transparent)]
    Vocabulary(GrnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<GrnError> for DataError {
    fn from(e: GrnError) -> Self {
        match e {
            GrnError::DuplicateSymbol(s) => DataError::DuplicateGene(s),
            other => DataError::Vocabulary(other),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Raw,
    Lognorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Mtx,
}

impl std::str::FromStr for MatrixFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "mtx" => Ok(Self::Mtx),
            other => Err(format!("unknown matrix format `{other}`")),
        }
    }
}

/// Cells × genes matrix of non-negative finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    values: Array2<f64>,
    barcodes: Vec<String>,
    genes: GeneVocabulary,
    scale: Scale,
}

impl ExpressionMatrix {
    pub fn new(
        values: Array2<f64>,
        barcodes: Vec<String>,
        genes: GeneVocabulary,
        scale: Scale,
    ) -> Result<Self, DataError> {
        if values.nrows() != barcodes.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} rows but {} barcodes",
                values.nrows(),
                barcodes.len()
            )));
        }
        if values.ncols() != genes.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} columns but {} genes",
                values.ncols(),
                genes.len()
            )));
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col });
            }
            if v < 0.0 {
                return Err(DataError::NegativeValue { row, col, value: v });
            }
        }
        Ok(Self {
            values,
            barcodes,
            genes,
            scale,
        })
    }

    /// Builds a matrix with generated barcodes `cell0`, `cell1`, ...
    pub fn from_rows(values: Array2<f64>, genes: GeneVocabulary, scale: Scale) -> Result<Self, DataError> {
        let barcodes = (0..values.nrows()).map(|i| format!("cell{i}")).collect();
        Self::new(values, barcodes, genes, scale)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn barcodes(&self) -> &[String] {
        &self.barcodes
    }

    pub fn genes(&self) -> &GeneVocabulary {
        &self.genes
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_cells(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            barcodes: rows.iter().map(|&r| self.barcodes[r].clone()).collect(),
            genes: self.genes.clone(),
            scale: self.scale,
        }
    }

    pub fn select_genes(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), cols),
            barcodes: self.barcodes.clone(),
            genes: self.genes.select(cols),
            scale: self.scale,
        }
    }

    /// Column positions of `symbols`, in the given order.
    pub fn gene_columns<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>, DataError> {
        symbols
            .iter()
            .map(|s| {
                self.genes
                    .index_of(s.as_ref())
                    .ok_or_else(|| DataError::UnknownGene(s.as_ref().to_string()))
            })
            .collect()
    }

    /// Stacks the cells of `other` below `self`.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        if self.genes != other.genes {
            return Err(DataError::ShapeMismatch("gene vocabularies differ".into()));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .expect("same column count");
        let mut barcodes = self.barcodes.clone();
        barcodes.extend(other.barcodes.iter().cloned());
        Ok(Self {
            values,
            barcodes,
            genes: self.genes.clone(),
            scale: self.scale,
        })
    }

    /// CSV text: `barcode,<genes...>` header, one cell per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("barcode");
        for g in self.genes.symbols() {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (row, barcode) in self.values.rows().into_iter().zip(&self.barcodes) {
            out.push_str(barcode);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Cell split sizes; whatever remains after test and validation is training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_size: usize,
    pub val_size: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Genes expressed in fewer cells than this are dropped.
    pub min_cells_expressed: usize,
    pub n_top_genes: usize,
}

impl PreprocessConfig {
    /// Expression threshold tied to the test-set size.
    pub fn for_split(split: &SplitSpec, n_top_genes: usize) -> Self {
        Self {
            min_cells_expressed: split.test_size,
            n_top_genes,
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<ExpressionMatrix, DataError> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::Mtx => load_mtx(path),
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn is_barcode_header(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "barcode" | "barcodes" | "cell" | "cell_id"
    )
}

fn load_csv(path: &Path) -> Result<ExpressionMatrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(parse_err(path, "empty header"));
    }
    let has_barcodes = is_barcode_header(&header[0]);
    let first_gene = usize::from(has_barcodes);
    let genes = GeneVocabulary::new(header.iter().skip(first_gene))?;

    let mut data = Vec::new();
    let mut barcodes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                format!("line {}: {} fields, header has {}", row + 2, record.len(), header.len()),
            ));
        }
        barcodes.push(if has_barcodes {
            record[0].trim().to_string()
        } else {
            format!("cell{row}")
        });
        for (col, field) in record.iter().skip(first_gene).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, format!("line {}: bad number `{field}`", row + 2)))?;
            if v < 0.0 {
                return Err(DataError::NegativeValue { row, col, value: v });
            }
            data.push(v);
        }
    }
    let values = Array2::from_shape_vec((barcodes.len(), genes.len()), data)
        .expect("row lengths checked");
    ExpressionMatrix::new(values, barcodes, genes, Scale::Raw)
}

fn read_lines(path: &Path, column: usize) -> Result<Vec<String>, DataError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let fields: Vec<&str> = l.split('\t').collect();
            fields.get(column).unwrap_or(&fields[0]).trim().to_string()
        })
        .collect())
}

/// Matrix Market coordinate file with `genes.txt` and `barcodes.txt` beside it.
/// Either orientation is accepted; genes × cells (10x) wins when ambiguous.
fn load_mtx(path: &Path) -> Result<ExpressionMatrix, DataError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let genes = read_lines(&dir.join("genes.txt"), 1)?;
    let barcodes = read_lines(&dir.join("barcodes.txt"), 0)?;
    let genes = GeneVocabulary::new(&genes)?;

    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let banner = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let banner_lc = banner.to_ascii_lowercase();
    if !banner_lc.starts_with("%%matrixmarket") || !banner_lc.contains("coordinate") {
        return Err(parse_err(path, "expected `%%MatrixMarket matrix coordinate` banner"));
    }
    let pattern = banner_lc.contains("pattern");
    let mut lines = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let size = lines.next().ok_or_else(|| parse_err(path, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, "bad size line")))
        .collect::<Result<_, _>>()?;
    let [nr, nc, nnz] = dims[..] else {
        return Err(parse_err(path, "size line needs three integers"));
    };
    let genes_by_cells = if nr == genes.len() && nc == barcodes.len() {
        true
    } else if nr == barcodes.len() && nc == genes.len() {
        false
    } else {
        return Err(DataError::ShapeMismatch(format!(
            "{nr}x{nc} matrix vs {} genes and {} barcodes",
            genes.len(),
            barcodes.len()
        )));
    };

    let mut values = Array2::<f64>::zeros((barcodes.len(), genes.len()));
    let mut seen = 0;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (i, j, v) = match (toks.len(), pattern) {
            (2, true) => (toks[0], toks[1], "1"),
            (3, false) => (toks[0], toks[1], toks[2]),
            _ => return Err(parse_err(path, format!("bad entry `{line}`"))),
        };
        let i: usize = i.parse().map_err(|_| parse_err(path, "bad row index"))?;
        let j: usize = j.parse().map_err(|_| parse_err(path, "bad column index"))?;
        let v: f64 = v.parse().map_err(|_| parse_err(path, "bad value"))?;
        if i == 0 || j == 0 || i > nr || j > nc {
            return Err(parse_err(path, format!("index ({i},{j}) out of range")));
        }
        let (cell, gene) = if genes_by_cells { (j - 1, i - 1) } else { (i - 1, j - 1) };
        if v < 0.0 {
            return Err(DataError::NegativeValue { row: cell, col: gene, value: v });
        }
        values[[cell, gene]] += v;
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(path, format!("header declares {nnz} entries, found {seen}")));
    }
    ExpressionMatrix::new(values, barcodes, genes, Scale::Raw)
}

/// Per-cell labels from a `barcode,label` CSV (header optional).
pub fn read_labels(path: &Path) -> Result<HashMap<String, String>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut out = HashMap::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        if rec.len() < 2 {
            return Err(parse_err(path, format!("line {}: expected barcode,label", n + 1)));
        }
        if n == 0 && rec[0].eq_ignore_ascii_case("barcode") {
            continue;
        }
        out.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    Ok(out)
}

/// Variance over mean of one gene's values; zero for unexpressed genes.
fn dispersion(column: ndarray::ArrayView1<f64>) -> f64 {
    let n = column.len() as f64;
    let (sum, sum_sq) = column
        .iter()
        .fold((0.0, 0.0), |(s, q), &v| (s + v, q + v * v));
    if sum == 0.0 || column.len() < 2 {
        return 0.0;
    }
    let var = (n * sum_sq - sum * sum) / (n * (n - 1.0));
    var.max(0.0) / (sum / n)
}

/// Filters genes, keeps the most dispersed ones and splits cells into
/// `(train, val, test)`.
pub fn preprocess(
    m: &ExpressionMatrix,
    cfg: &PreprocessConfig,
    split: &SplitSpec,
) -> Result<(ExpressionMatrix, ExpressionMatrix, ExpressionMatrix), DataError> {
    if m.scale != Scale::Raw {
        return Err(DataError::NotRaw);
    }
    if cfg.min_cells_expressed == 0 || cfg.n_top_genes == 0 {
        return Err(DataError::InvalidConfig(
            "min_cells_expressed and n_top_genes must be positive".into(),
        ));
    }
    if split.test_size == 0 || split.val_size == 0 {
        return Err(DataError::InvalidConfig("split sizes must be positive".into()));
    }
    let held_out = split.test_size + split.val_size;
    if held_out >= m.n_cells() {
        return Err(DataError::TooFewCells {
            need: held_out,
            have: m.n_cells(),
        });
    }

    let mut ranked: Vec<(usize, f64)> = m
        .values
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(_, col)| col.iter().filter(|&&v| v > 0.0).count() >= cfg.min_cells_expressed)
        .map(|(j, col)| (j, dispersion(col)))
        .collect();
    if ranked.len() < cfg.n_top_genes {
        return Err(DataError::TooFewGenes {
            need: cfg.n_top_genes,
            have: ranked.len(),
        });
    }
    let symbols = m.genes.symbols();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| symbols[a.0].cmp(&symbols[b.0])));
    let mut keep: Vec<usize> = ranked[..cfg.n_top_genes].iter().map(|&(j, _)| j).collect();
    keep.sort_unstable();
    let filtered = m.select_genes(&keep);

    let mut order: Vec<usize> = (0..m.n_cells()).collect();
    order.shuffle(&mut seed::rng(split.seed));
    let mut test = order[..split.test_size].to_vec();
    let mut val = order[split.test_size..held_out].to_vec();
    let mut train = order[held_out..].to_vec();
    for part in [&mut test, &mut val, &mut train] {
        part.sort_unstable();
    }
    Ok((
        filtered.select_cells(&train),
        filtered.select_cells(&val),
        filtered.select_cells(&test),
    ))
}

/// Rescales every cell to total `scale`; the matrix keeps its raw flag.
pub fn library_rescale(m: &ExpressionMatrix, scale: f64) -> Result<ExpressionMatrix, DataError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DataError::InvalidConfig(format!("scale must be positive, got {scale}")));
    }
    let mut values = m.values.clone();
    for (mut row, barcode) in values.rows_mut().into_iter().zip(&m.barcodes) {
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(DataError::ZeroLibrary(barcode.clone()));
        }
        row.mapv_inplace(|v| v * scale / total);
    }
    Ok(ExpressionMatrix {
        values,
        ..m.clone()
    })
}

/// Library-size normalization to `scale` followed by `ln(1 + x)`.
pub fn normalize_log1p(m: &ExpressionMatrix, scale: f64) -> Result<ExpressionMatrix, DataError> {
    if m.scale != Scale::Raw {
        return Err(DataError::NotRaw);
    }
    let mut out = library_rescale(m, scale)?;
    out.values.mapv_inplace(f64::ln_1p);
    out.scale = Scale::Lognorm;
    Ok(out)
}

/// Per-gene mean over cells.
pub fn centroid(m: &ExpressionMatrix) -> Result<Array1<f64>, DataError> {
    m.values.mean_axis(Axis(0)).ok_or(DataError::EmptyMatrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn vocab(n: usize) -> GeneVocabulary {
        GeneVocabulary::new((0..n).map(|i| format!("G{i}"))).unwrap()
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn csv_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "GENEA,GENEB\n1,0\n0,2\n3,3\n");
        let m = load_matrix(&p, MatrixFormat::Csv).unwrap();
        assert_eq!(m.values().dim(), (3, 2));
        let sums: Vec<f64> = m.values().sum_axis(Axis(0)).to_vec();
        assert_eq!(sums, [4.0, 5.0]);
        assert_eq!(m.barcodes()[2], "cell2");
    }

    #[test]
    fn csv_with_barcode_column_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "barcode,a,b\nAAAC,1,2\nGGGT,0.5,0\n");
        let m = load_matrix(&p, MatrixFormat::Csv).unwrap();
        assert_eq!(m.barcodes(), ["AAAC", "GGGT"]);
        assert_eq!(m.genes().symbols(), ["A", "B"]);
        let q = write(dir.path(), "n.csv", &m.to_csv());
        assert_eq!(load_matrix(&q, MatrixFormat::Csv).unwrap(), m);
    }

    #[test]
    fn csv_rejects_negative_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "neg.csv", "A,B\n1,-1\n");
        assert!(matches!(load_matrix(&p, MatrixFormat::Csv), Err(DataError::NegativeValue { .. })));
        let p = write(dir.path(), "dup.csv", "A,a\n1,1\n");
        assert!(matches!(load_matrix(&p, MatrixFormat::Csv), Err(DataError::DuplicateGene(_))));
        let p = write(dir.path(), "bad.csv", "A,B\n1,x\n");
        assert!(matches!(load_matrix(&p, MatrixFormat::Csv), Err(DataError::Parse { .. })));
    }

    #[test]
    fn mtx_sparse_to_dense() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "genes.txt", "ENSG1\tGA\nENSG2\tGB\n");
        write(dir.path(), "barcodes.txt", "c1\nc2\nc3\n");
        // cells x genes orientation
        let p = write(
            dir.path(),
            "matrix.mtx",
            "%%MatrixMarket matrix coordinate integer general\n% comment\n3 2 2\n1 1 5\n3 2 7\n",
        );
        let m = load_matrix(&p, MatrixFormat::Mtx).unwrap();
        assert_eq!(m.values(), &array![[5.0, 0.0], [0.0, 0.0], [0.0, 7.0]]);
        assert_eq!(m.values().iter().filter(|&&v| v == 0.0).count(), 4);
        assert_eq!(m.genes().symbols(), ["GA", "GB"]);

        // 10x genes x cells orientation
        let p = write(
            dir.path(),
            "matrix.mtx",
            "%%MatrixMarket matrix coordinate integer general\n2 3 2\n1 1 5\n2 3 7\n",
        );
        assert_eq!(load_matrix(&p, MatrixFormat::Mtx).unwrap(), m);
    }

    #[test]
    fn mtx_entry_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "genes.txt", "A\nB\n");
        write(dir.path(), "barcodes.txt", "c1\nc2\nc3\n");
        let p = write(
            dir.path(),
            "matrix.mtx",
            "%%MatrixMarket matrix coordinate real general\n3 2 3\n1 1 5\n",
        );
        assert!(matches!(load_matrix(&p, MatrixFormat::Mtx), Err(DataError::Parse { .. })));
    }

    #[test]
    fn log1p_symmetric_row() {
        let m = ExpressionMatrix::from_rows(array![[1.0, 1.0]], vocab(2), Scale::Raw).unwrap();
        let r = library_rescale(&m, 10_000.0).unwrap();
        assert_eq!(r.values(), &array![[5000.0, 5000.0]]);
        let n = normalize_log1p(&m, 10_000.0).unwrap();
        assert_eq!(n.values()[[0, 0]], 5001f64.ln());
        assert_eq!(n.values()[[0, 1]], 5001f64.ln());
        assert_eq!(n.scale(), Scale::Lognorm);
        assert!(matches!(normalize_log1p(&n, 1.0), Err(DataError::NotRaw)));
    }

    #[test]
    fn log1p_rejects_zero_library() {
        let m = ExpressionMatrix::from_rows(array![[1.0, 0.0], [0.0, 0.0]], vocab(2), Scale::Raw).unwrap();
        assert!(matches!(normalize_log1p(&m, 10_000.0), Err(DataError::ZeroLibrary(b)) if b == "cell1"));
    }

    #[test]
    fn rescaled_rows_sum_to_scale() {
        let m = ExpressionMatrix::from_rows(
            array![[3.0, 7.0, 11.0], [0.1, 0.0, 0.7], [1e6, 2.0, 3.0]],
            vocab(3),
            Scale::Raw,
        )
        .unwrap();
        let r = library_rescale(&m, 10_000.0).unwrap();
        for row in r.values().rows() {
            assert!((row.sum() - 10_000.0).abs() < 1e-6);
        }
    }

    #[test]
    fn centroid_examples() {
        let m = ExpressionMatrix::from_rows(array![[1.0, 3.0], [3.0, 5.0]], vocab(2), Scale::Raw).unwrap();
        assert_eq!(centroid(&m).unwrap().to_vec(), [2.0, 4.0]);
        let one = m.select_cells(&[1]);
        assert_eq!(centroid(&one).unwrap().to_vec(), [3.0, 5.0]);
        let rows = Array2::from_shape_fn((100, 2), |(_, j)| [0.25, 8.0][j]);
        let same = ExpressionMatrix::from_rows(rows, vocab(2), Scale::Raw).unwrap();
        assert_eq!(centroid(&same).unwrap().to_vec(), [0.25, 8.0]);
        let empty = m.select_cells(&[]);
        assert!(matches!(centroid(&empty), Err(DataError::EmptyMatrix)));
    }

    fn count_fixture(n_cells: usize, n_genes: usize) -> ExpressionMatrix {
        let values = Array2::from_shape_fn((n_cells, n_genes), |(i, j)| {
            // gene 0 never expressed; higher j → more dispersed
            if j == 0 {
                0.0
            } else {
                ((i * 7 + j * 13) % (j + 2)) as f64 * (j as f64)
            }
        });
        ExpressionMatrix::from_rows(values, vocab(n_genes), Scale::Raw).unwrap()
    }

    #[test]
    fn preprocess_filters_and_splits() {
        let m = count_fixture(60, 12);
        let split = SplitSpec { test_size: 10, val_size: 5, seed: 1 };
        let cfg = PreprocessConfig { min_cells_expressed: 1, n_top_genes: 6 };
        let (train, val, test) = preprocess(&m, &cfg, &split).unwrap();
        assert_eq!((train.n_cells(), val.n_cells(), test.n_cells()), (45, 5, 10));
        assert!(!train.genes().contains("G0"));
        assert_eq!(train.genes(), test.genes());
        assert_eq!(train.genes(), val.genes());
        assert_eq!(train.n_genes(), 6);

        let mut all: Vec<&String> = train
            .barcodes()
            .iter()
            .chain(val.barcodes())
            .chain(test.barcodes())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 60);

        let again = preprocess(&m, &cfg, &split).unwrap();
        assert_eq!(again.2.barcodes(), test.barcodes());
    }

    #[test]
    fn preprocess_errors() {
        let m = count_fixture(20, 5);
        let split = SplitSpec { test_size: 10, val_size: 10, seed: 0 };
        let cfg = PreprocessConfig { min_cells_expressed: 1, n_top_genes: 2 };
        assert!(matches!(preprocess(&m, &cfg, &split), Err(DataError::TooFewCells { .. })));
        let split = SplitSpec { test_size: 2, val_size: 2, seed: 0 };
        let cfg = PreprocessConfig { min_cells_expressed: 1, n_top_genes: 5 };
        assert!(matches!(
            preprocess(&m, &cfg, &split),
            Err(DataError::TooFewGenes { need: 5, have: 4 })
        ));
    }

    #[test]
    fn default_threshold_is_test_size() {
        let split = SplitSpec { test_size: 1000, val_size: 1000, seed: 0 };
        assert_eq!(PreprocessConfig::for_split(&split, 1000).min_cells_expressed, 1000);
    }
}
