use super::MetricError;

/// Rank-based (Mann-Whitney) AUROC; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average ranks (1-based) over tie groups
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.2, 0.8], &[true, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    }

    #[test]
    fn errors() {
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(MetricError::SingleClass)));
        assert!(matches!(auroc(&[1.0], &[true, false]), Err(MetricError::LengthMismatch(_))));
    }
}
