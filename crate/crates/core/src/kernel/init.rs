use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernelError, Tensor};

/// Glorot/Xavier uniform initialization on `[-b, b]`, `b = sqrt(6 / (fan_in + fan_out))`.
///
/// For 1-D shapes both fans equal the extent. For rank ≥ 3 the trailing
/// extents act as a receptive field multiplying both fans.
pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor, KernelError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(KernelError::ZeroExtent(shape.to_vec()));
    }
    let (fan_in, fan_out) = match shape.len() {
        1 => (shape[0], shape[0]),
        _ => {
            let receptive: usize = shape[2..].iter().product();
            (shape[1] * receptive, shape[0] * receptive)
        }
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_lie_within_bound() {
        let t = xavier_init(&[4, 4], 3).unwrap();
        let b = (6.0f64 / 8.0).sqrt();
        assert!((b - 0.8660).abs() < 1e-4);
        assert!(t.data().iter().all(|x| x.abs() <= b));
    }

    #[test]
    fn seed_determines_values() {
        assert_eq!(xavier_init(&[5, 3], 9).unwrap(), xavier_init(&[5, 3], 9).unwrap());
        assert_ne!(xavier_init(&[5, 3], 9).unwrap(), xavier_init(&[5, 3], 10).unwrap());
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert!(matches!(xavier_init(&[3, 0], 1), Err(KernelError::ZeroExtent(_))));
        assert!(xavier_init(&[], 1).is_err());
    }

    #[test]
    fn large_sample_is_centered_with_uniform_variance() {
        // Uniform(-b, b): mean 0, variance b²/3. With 10⁶ draws the standard
        // error of the mean is b/sqrt(3·10⁶) ≈ 4.5e-5, far inside ±0.01.
        let t = xavier_init(&[1000, 1000], 42).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let b = (6.0f64 / 2000.0).sqrt();
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - b * b / 3.0).abs() < 0.01 * b * b);
    }
}
