//! Dot-plot data: per (cell type, marker) mean expression and the fraction
//! of cells expressing the marker.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::expression::ExpressionMatrix;
use crate::grn::normalize_symbol;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerStat {
    pub cell_type: String,
    pub marker: String,
    pub mean: f64,
    pub fraction: f64,
}

pub fn marker_summary(
    m: &ExpressionMatrix,
    labels: &[String],
    markers: &[String],
) -> Result<Vec<MarkerStat>, MetricError> {
    if labels.len() != m.n_cells() {
        return Err(MetricError::LengthMismatch(format!(
            "{} labels for {} cells",
            labels.len(),
            m.n_cells()
        )));
    }
    let cols: Vec<(String, usize)> = markers
        .iter()
        .map(|raw| {
            let sym = normalize_symbol(raw);
            match m.genes().index_of(&sym) {
                Some(c) => Ok((sym, c)),
                None => Err(MetricError::UnknownMarker(raw.clone())),
            }
        })
        .collect::<Result<_, _>>()?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_str()).or_default().push(i);
    }
    let values = m.values();
    let mut out = Vec::with_capacity(groups.len() * cols.len());
    for (cell_type, rows) in &groups {
        for (marker, c) in &cols {
            let n = rows.len() as f64;
            let sum: f64 = rows.iter().map(|&r| values[[r, *c]]).sum();
            let expressing = rows.iter().filter(|&&r| values[[r, *c]] > 0.0).count();
            out.push(MarkerStat {
                cell_type: cell_type.to_string(),
                marker: marker.clone(),
                mean: sum / n,
                fraction: expressing as f64 / n,
            });
        }
    }
    Ok(out)
}

/// Long-form `type,marker,mean,fraction` CSV.
pub fn markers_to_csv(stats: &[MarkerStat]) -> String {
    let mut out = String::from("type,marker,mean,fraction\n");
    for s in stats {
        let _ = writeln!(out, "{},{},{},{}", s.cell_type, s.marker, s.mean, s.fraction);
    }
    out
}
