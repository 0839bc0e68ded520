use super::dense::DenseMatrix;
use crate::rng::RngState;

/// Half-width of the Xavier/Glorot uniform interval, `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_in × fan_out` matrix with entries drawn from `U(-a, a)`,
/// `a = sqrt(6 / (fan_in + fan_out))`. Entries are strictly inside the interval.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut RngState) -> DenseMatrix {
    assert!(fan_in >= 1 && fan_out >= 1, "xavier_uniform needs positive fans");
    let a = xavier_bound(fan_in, fan_out);
    let limit = a as f32;
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| loop {
        let w = (a * (2.0 * rng.uniform() - 1.0)) as f32;
        if w.abs() < limit {
            break w;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn square_three_has_unit_bound() {
        assert!((xavier_bound(3, 3) - 1.0).abs() < 1e-15);
        let mut rng = RngState::new(0, Stream::Init);
        let w = xavier_uniform(3, 3, &mut rng);
        assert!(w.as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn cora_dimensions_bound() {
        // a = sqrt(6 / (1433 + 512))
        assert!((xavier_bound(1433, 512) - 0.05554).abs() < 5e-6);
    }

    #[test]
    fn sample_std_matches_uniform_moment() {
        let mut rng = RngState::new(9, Stream::Init);
        let w = xavier_uniform(100, 100, &mut rng);
        let a = xavier_bound(100, 100);
        let n = w.as_slice().len() as f64;
        let mean = w.as_slice().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = w
            .as_slice()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let expected = a / 3f64.sqrt();
        assert!((var.sqrt() - expected).abs() < 0.1 * expected);
        assert!(mean.abs() < 0.05 * a);
        assert!(w.as_slice().iter().all(|&v| (v as f64).abs() < a));
    }

    #[test]
    fn bitwise_reproducible() {
        let a = xavier_uniform(31, 7, &mut RngState::new(42, Stream::Init));
        let b = xavier_uniform(31, 7, &mut RngState::new(42, Stream::Init));
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
