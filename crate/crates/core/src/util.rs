//! Small numeric helpers shared across modules.

/// Pairwise summation. Used everywhere an accumulation order must be
/// reproducible and insensitive to the length of the input.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n if n <= 32 => {
            let mut acc = 0.0;
            for v in values {
                acc += v;
            }
            acc
        }
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sample mean via pairwise summation.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Central moment of the given order.
pub fn central_moment(values: &[f64], order: u32) -> f64 {
    let m = mean(values);
    let pw: Vec<f64> = values.iter().map(|v| (v - m).powi(order as i32)).collect();
    mean(&pw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1001).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let xs = vec![3.5; 40];
        assert_eq!(sample_variance(&xs), 0.0);
    }
}
