/// Pairwise (cascade) summation. Deterministic for a fixed element order and
/// substantially more accurate than a running sum on long inputs.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 64;
    if values.len() <= BASE {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Logistic function, evaluated on the side that avoids overflow. Saturates
/// cleanly to exactly 0.0 and 1.0 for large |z|.
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_saturates_and_centers() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        let s = logistic(1.3);
        assert!((s + logistic(-1.3) - 1.0).abs() < 1e-15);
        assert!(s > 0.5 && s < 1.0);
    }

    #[test]
    fn matches_exact_sum_on_integers() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&values), 499_500.0);
    }

    #[test]
    fn empty_sums_to_zero() {
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
