//! PCA projection of real vs synthetic cells as SVG plus a coordinate CSV.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{write_file, PipelineError};
use crate::expression::{normalize_log1p, ExpressionMatrix, Scale};
use crate::metrics::{MetricError, Pca};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 48.0;
const REAL_COLOR: &str = "#1f77b4";
const SYNTHETIC_COLOR: &str = "#d62728";

fn lognorm(m: &ExpressionMatrix) -> Result<ExpressionMatrix, PipelineError> {
    match m.scale() {
        Scale::Lognorm => Ok(m.clone()),
        Scale::Raw => normalize_log1p(m, 10_000.0).map_err(|e| PipelineError::stage("plot", e)),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fits PCA on the pooled lognorm cells, writes every cell's coordinates to
/// `csv_path` and a PC1/PC2 scatter to `svg_path`.
pub fn plot_projection(
    r: &ExpressionMatrix,
    s: &ExpressionMatrix,
    n_pcs: usize,
    svg_path: &Path,
    csv_path: &Path,
) -> Result<Array2<f64>, PipelineError> {
    let stage = |e: MetricError| PipelineError::stage("plot", e);
    if r.n_cells() == 0 || s.n_cells() == 0 {
        return Err(stage(MetricError::EmptyMatrix));
    }
    if r.genes() != s.genes() {
        return Err(stage(MetricError::VocabularyMismatch));
    }
    let pooled = lognorm(r)?
        .concat(&lognorm(s)?)
        .map_err(|e| PipelineError::stage("plot", e))?;
    let pca = Pca::fit(pooled.values().view(), n_pcs.max(2)).map_err(stage)?;
    let coords = pca.transform(pooled.values().view());
    let k = coords.ncols();

    let mut csv = String::from("source,barcode");
    for j in 0..k {
        let _ = write!(csv, ",pc{}", j + 1);
    }
    csv.push('\n');
    let sources = std::iter::repeat_n("real", r.n_cells()).chain(std::iter::repeat_n("synthetic", s.n_cells()));
    for ((i, src), bc) in sources.enumerate().zip(r.barcodes().iter().chain(s.barcodes())) {
        let _ = write!(csv, "{src},{bc}");
        for j in 0..k {
            let _ = write!(csv, ",{}", coords[[i, j]]);
        }
        csv.push('\n');
    }
    write_file(csv_path, csv)?;

    let xy = |i: usize| {
        let x = coords[[i, 0]];
        let y = if k > 1 { coords[[i, 1]] } else { 0.0 };
        (x, y)
    };
    let n = coords.nrows();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let (x, y) = xy(i);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / sx * inner;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / sy * inner;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="black"/>"#
    );
    for (i, color) in (0..n).map(|i| (i, if i < r.n_cells() { REAL_COLOR } else { SYNTHETIC_COLOR })) {
        let (x, y) = xy(i);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.5"/>"#,
            px(x),
            py(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">PC1</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 16 {})">PC2</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for (row, (label, color)) in [("real", REAL_COLOR), ("synthetic", SYNTHETIC_COLOR)].iter().enumerate() {
        let y = 20.0 + 18.0 * row as f64;
        let _ = writeln!(svg, r#"<circle cx="{}" cy="{y}" r="5" fill="{color}"/>"#, SIZE - 120.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13">{}</text>"#,
            SIZE - 108.0,
            y + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    write_file(svg_path, svg)?;
    Ok(coords)
}
