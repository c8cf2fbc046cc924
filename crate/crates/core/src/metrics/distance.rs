use super::{check_pair, MetricError};
use crate::expression::{centroid, ExpressionMatrix};

/// `1 - cos(angle)` between the two per-gene centroids.
pub fn cosine_distance(r: &ExpressionMatrix, s: &ExpressionMatrix) -> Result<f64, MetricError> {
    check_pair(r, s)?;
    let (a, b) = (centroid(r)?, centroid(s)?);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroCentroid);
    }
    // half the squared chord between unit vectors; avoids cancellation near 0
    let d = a / na - b / nb;
    Ok(0.5 * d.dot(&d))
}

/// L2 distance between the two per-gene centroids.
pub fn euclidean_distance(r: &ExpressionMatrix, s: &ExpressionMatrix) -> Result<f64, MetricError> {
    check_pair(r, s)?;
    let d = centroid(r)? - centroid(s)?;
    Ok(d.dot(&d).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expression::Scale;
    use crate::grn::GeneVocabulary;
    use ndarray::{array, Array2};

    fn m(rows: Array2<f64>) -> ExpressionMatrix {
        let genes = GeneVocabulary::new((0..rows.ncols()).map(|i| format!("G{i}"))).unwrap();
        ExpressionMatrix::from_rows(rows, genes, Scale::Lognorm).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let r = m(array![[1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(cosine_distance(&r, &r).unwrap(), 0.0);
        assert_eq!(cosine_distance(&r, &m(array![[0.0, 1.0]])).unwrap(), 1.0);
        let v = cosine_distance(&r, &m(array![[1.0, 1.0]])).unwrap();
        assert!((v - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((v - 0.29289).abs() < 1e-5);
        assert!(matches!(
            cosine_distance(&r, &m(array![[0.0, 0.0]])),
            Err(MetricError::ZeroCentroid)
        ));
    }

    #[test]
    fn euclidean_examples() {
        let r = m(array![[0.0, 0.0]]);
        assert_eq!(euclidean_distance(&r, &r).unwrap(), 0.0);
        let s = m(array![[3.0, 4.0]]);
        assert_eq!(euclidean_distance(&r, &s).unwrap(), 5.0);
        let a = m(array![[1.0, 2.0], [0.5, 0.0]]);
        let b = m(array![[3.0, 1.0]]);
        let d = euclidean_distance(&a, &b).unwrap();
        let a3 = m(a.values() * 3.0);
        let b3 = m(b.values() * 3.0);
        assert!((euclidean_distance(&a3, &b3).unwrap() - 3.0 * d).abs() < 1e-12);
        assert!((cosine_distance(&a3, &b).unwrap() - cosine_distance(&a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_mismatch() {
        let r = m(array![[1.0, 0.0]]);
        let s = m(array![[1.0, 0.0, 2.0]]);
        assert!(matches!(euclidean_distance(&r, &s), Err(MetricError::VocabularyMismatch)));
    }
}
