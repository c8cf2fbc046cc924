//! Table-shaped summaries across arms and runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::manifest::{ArmRecord, RunManifest};
use super::{write_file, PipelineError};
use crate::grn::{overlap, read_grn};

pub const METRIC_NAMES: [&str; 4] = ["cosine", "euclidean", "mmd", "rf_auroc"];

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub csv: String,
    pub markdown: String,
    /// Long-form `partition,grn_a,grn_b,overlap`, present when at least two
    /// GRNs share a partition.
    pub overlap_csv: Option<String>,
    /// `best[row][metric]` for rows in table order.
    pub best: Vec<[bool; 4]>,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        write_file(&dir.join("report.csv"), &self.csv)?;
        write_file(&dir.join("report.md"), &self.markdown)?;
        if let Some(o) = &self.overlap_csv {
            write_file(&dir.join("overlap.csv"), o)?;
        }
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Marks the per-column minimum among non-baseline rows.
fn mark_best(rows: &[(&RunManifest, &ArmRecord)]) -> Vec<[bool; 4]> {
    let mut best = vec![[false; 4]; rows.len()];
    for j in 0..4 {
        let min = rows
            .iter()
            .filter(|(_, a)| !a.grn_source.is_baseline())
            .map(|(_, a)| a.report.means()[j])
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            continue;
        }
        for (i, (_, a)) in rows.iter().enumerate() {
            if !a.grn_source.is_baseline() && a.report.means()[j] == min {
                best[i][j] = true;
            }
        }
    }
    best
}

/// Aggregates the arm metrics of runs on one gene vocabulary.
pub fn make_report(manifests: &[RunManifest]) -> Result<Report, PipelineError> {
    let first = manifests
        .first()
        .ok_or_else(|| PipelineError::IncompatibleManifests("no manifests given".into()))?;
    if let Some(m) = manifests.iter().find(|m| m.vocabulary_digest != first.vocabulary_digest) {
        return Err(PipelineError::IncompatibleManifests(format!(
            "`{}` and `{}` use different gene vocabularies",
            first.name, m.name
        )));
    }
    let rows: Vec<(&RunManifest, &ArmRecord)> = manifests
        .iter()
        .flat_map(|m| m.arms.iter().map(move |a| (m, a)))
        .collect();
    let best = mark_best(&rows);

    let mut csv = String::from("setting,arm,kb_source,grn_source");
    for n in METRIC_NAMES {
        let _ = write!(csv, ",{n}_mean,{n}_std");
    }
    csv.push_str(",n_repeats,mmd_kernel,best\n");
    let mut md = String::from(
        "| Setting | Arm | KB | GRN | Cosine | Euclidean | MMD | RF AUROC |\n|---|---|---|---|---|---|---|---|\n",
    );
    for ((m, a), b) in rows.iter().zip(&best) {
        let kb = a.kb_source.map(|k| k.as_str()).unwrap_or("-");
        let r = &a.report;
        let _ = write!(csv, "{},{},{},{}", m.name, a.name, kb, a.grn_source.report_label());
        let stats = [r.cosine, r.euclidean, r.mmd, r.rf_auroc];
        for s in stats {
            let _ = write!(csv, ",{},{}", s.mean, s.std);
        }
        let marks: Vec<&str> = (0..4).filter(|&j| b[j]).map(|j| METRIC_NAMES[j]).collect();
        let _ = writeln!(csv, ",{},{},{}", r.n_repeats, r.mmd_kernel, marks.join(";"));

        let _ = write!(md, "| {} | {} | {} | {} |", m.name, a.name, kb, a.grn_source.report_label());
        for (j, s) in stats.iter().enumerate() {
            let cell = format!("{} ± {}", fmt_value(s.mean), fmt_value(s.std));
            if b[j] {
                let _ = write!(md, " **{cell}** |");
            } else {
                let _ = write!(md, " {cell} |");
            }
        }
        md.push('\n');
    }
    md.push_str("\nLower is better in every column. Bold marks the best value excluding control and stage1 rows.\n");

    let overlap_csv = overlap_section(manifests, &mut md)?;
    Ok(Report {
        csv,
        markdown: md,
        overlap_csv,
        best,
    })
}

fn overlap_section(manifests: &[RunManifest], md: &mut String) -> Result<Option<String>, PipelineError> {
    let mut groups: BTreeMap<&str, Vec<(String, &Path, &str)>> = BTreeMap::new();
    for m in manifests {
        for a in &m.arms {
            if let (Some(d), Some(g)) = (&a.partition_digest, a.grns.first()) {
                groups
                    .entry(d.as_str())
                    .or_default()
                    .push((format!("{}/{}", m.name, a.name), m.out_dir.as_path(), g.as_str()));
            }
        }
    }
    let mut csv = String::from("partition,grn_a,grn_b,overlap\n");
    let mut any = false;
    for (digest, members) in groups.into_iter().filter(|(_, v)| v.len() >= 2) {
        any = true;
        let grns = members
            .iter()
            .map(|(_, dir, rel)| read_grn(&dir.join(rel)).map_err(|e| PipelineError::stage("report", e)))
            .collect::<Result<Vec<_>, _>>()?;
        let short = &digest[..digest.len().min(12)];
        let _ = write!(md, "\n### Edge overlap (partition {short})\n\n|  |");
        for (id, _, _) in &members {
            let _ = write!(md, " {id} |");
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(members.len()));
        md.push('\n');
        for (i, (id, _, _)) in members.iter().enumerate() {
            let _ = write!(md, "| {id} |");
            for (j, (jd, _, _)) in members.iter().enumerate() {
                let o = overlap(&grns[i], &grns[j]).map_err(|e| PipelineError::stage("report", e))?;
                let _ = write!(md, " {o:.4} |");
                let _ = writeln!(csv, "{short},{id},{jd},{o}");
            }
            md.push('\n');
        }
    }
    Ok(any.then_some(csv))
}
