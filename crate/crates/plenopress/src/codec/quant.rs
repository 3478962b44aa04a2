//! Latent quantization.

use super::tensor::FeatureTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quantization modes: hard rounding for coding, seeded uniform noise as
/// the training-time surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    Round,
    Noise { seed: u64 },
}

/// Rounds half away from zero (`f64::round` semantics): 0.5 -> 1,
/// -0.5 -> -1. With a mu offset, the residual is rounded and the offset
/// restored: round(y - mu) + mu.
pub fn quantize(y: &FeatureTensor, mode: QuantizeMode, mu_offset: Option<&FeatureTensor>) -> FeatureTensor {
    match mode {
        QuantizeMode::Round => {
            let mut out = y.clone();
            match mu_offset {
                None => {
                    for v in out.data.iter_mut() {
                        *v = v.round();
                    }
                }
                Some(mu) => {
                    debug_assert!(y.same_shape(mu));
                    for (v, &m) in out.data.iter_mut().zip(&mu.data) {
                        *v = (*v - m).round() + m;
                    }
                }
            }
            out
        }
        QuantizeMode::Noise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = y.clone();
            for v in out.data.iter_mut() {
                *v += rng.gen::<f64>() - 0.5;
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_rule_half_away_from_zero() {
        let y = FeatureTensor::from_vec(1, 1, 4, vec![0.5, -0.5, 1.5, -2.5]).unwrap();
        let q = quantize(&y, QuantizeMode::Round, None);
        assert_eq!(q.data, vec![1.0, -1.0, 2.0, -3.0]);
    }

    #[test]
    fn mu_offset_identity_when_mu_equals_y() {
        let y = FeatureTensor::from_vec(1, 1, 3, vec![0.3, -1.7, 2.2]).unwrap();
        let q = quantize(&y, QuantizeMode::Round, Some(&y));
        assert_eq!(q.data, y.data);
    }

    #[test]
    fn noise_mode_reproducible_and_bounded() {
        let y = FeatureTensor::zeros(2, 3, 3);
        let a = quantize(&y, QuantizeMode::Noise { seed: 9 }, None);
        let b = quantize(&y, QuantizeMode::Noise { seed: 9 }, None);
        let c = quantize(&y, QuantizeMode::Noise { seed: 10 }, None);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data.iter().all(|&v| (-0.5..0.5).contains(&v)));
    }
}
