//! Rate estimation under the Gaussian conditional and the factorized
//! prior, and the rate-distortion training loss.

use super::network::{FactorizedPrior, GaussianParams, LAMBDA_TABLE};
use super::tensor::FeatureTensor;
use crate::detmath::gaussian_interval_mass;
use crate::error::{Error, Result};

/// Interval probabilities are floored at 2^-50, capping any element's
/// cost at 50 bits.
pub const PROB_FLOOR: f64 = 1.0 / (1u64 << 50) as f64;

/// Total bits to code y-hat under per-element N(mu, sigma) unit-interval
/// masses.
pub fn rate_estimate(y_hat: &FeatureTensor, gp: &GaussianParams) -> Result<f64> {
    if !y_hat.same_shape(&gp.mu) || !y_hat.same_shape(&gp.sigma) {
        return Err(Error::input("rate_estimate: shape mismatch"));
    }
    let mut bits = 0.0;
    for ((&v, &mu), &sigma) in y_hat.data.iter().zip(&gp.mu.data).zip(&gp.sigma.data) {
        let p = gaussian_interval_mass(v, mu, sigma).max(PROB_FLOOR);
        bits += -p.log2();
    }
    Ok(bits)
}

/// Total bits for the hyper-latent under the per-channel mixture prior.
pub fn rate_estimate_factorized(z_hat: &FeatureTensor, prior: &FactorizedPrior) -> Result<f64> {
    if z_hat.channels != prior.channels {
        return Err(Error::input("rate_estimate_factorized: channel mismatch"));
    }
    let hw = z_hat.height * z_hat.width;
    let mut bits = 0.0;
    for c in 0..z_hat.channels {
        for p in 0..hw {
            let v = z_hat.data[c * hw + p];
            let mass = prior.interval_mass(c, v).max(PROB_FLOOR);
            bits += -mass.log2();
        }
    }
    Ok(bits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
}

impl LossConfig {
    pub fn from_lambda_index(index: usize) -> Result<LossConfig> {
        LAMBDA_TABLE
            .get(index)
            .map(|&lambda| LossConfig { lambda })
            .ok_or_else(|| Error::input(format!("lambda index {index} out of range 0..6")))
    }
}

/// L = (R(y) + R(z)) / pixels + lambda * 255^2 * MSE on [0,1]-scaled
/// pixels. The 255^2 factor fixes the distortion scale the lambda table
/// is calibrated against.
pub fn rd_loss(
    x: &FeatureTensor,
    x_hat: &FeatureTensor,
    rate_y_bits: f64,
    rate_z_bits: f64,
    cfg: LossConfig,
    pixel_count: usize,
) -> Result<f64> {
    let mse = x.mse(x_hat)?;
    Ok((rate_y_bits + rate_z_bits) / pixel_count as f64 + cfg.lambda * 255.0 * 255.0 * mse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp_const(shape: (usize, usize, usize), mu: f64, sigma: f64) -> GaussianParams {
        GaussianParams {
            mu: FeatureTensor::zeros(shape.0, shape.1, shape.2).map(|_| mu),
            sigma: FeatureTensor::zeros(shape.0, shape.1, shape.2).map(|_| sigma),
        }
    }

    #[test]
    fn single_element_at_mean() {
        // -log2(Phi(0.5) - Phi(-0.5)) = -log2(0.382925) = 1.385
        let y = FeatureTensor::zeros(1, 1, 1);
        let gp = gp_const((1, 1, 1), 0.0, 1.0);
        let bits = rate_estimate(&y, &gp).unwrap();
        assert!((bits - 1.385).abs() < 1e-3, "{bits}");
    }

    #[test]
    fn tail_hits_floor() {
        let y = FeatureTensor::from_vec(1, 1, 1, vec![1000.0]).unwrap();
        let gp = gp_const((1, 1, 1), 0.0, 1.0);
        let bits = rate_estimate(&y, &gp).unwrap();
        assert!((bits - 50.0).abs() < 1e-9);
    }

    #[test]
    fn additivity() {
        let y = FeatureTensor::from_vec(1, 1, 4, vec![0.0, 1.0, -2.0, 3.0]).unwrap();
        let gp = gp_const((1, 1, 4), 0.0, 1.5);
        let total = rate_estimate(&y, &gp).unwrap();
        let mut sum = 0.0;
        for i in 0..4 {
            let yi = FeatureTensor::from_vec(1, 1, 1, vec![y.data[i]]).unwrap();
            sum += rate_estimate(&yi, &gp_const((1, 1, 1), 0.0, 1.5)).unwrap();
        }
        assert!((total - sum).abs() < 1e-12);
    }

    #[test]
    fn translation_invariance() {
        // Joint integer shift of (y, mu) leaves the rate unchanged.
        let y = FeatureTensor::from_vec(1, 1, 3, vec![0.0, 1.0, -1.0]).unwrap();
        let gp = gp_const((1, 1, 3), 0.25, 0.9);
        let shifted_y = y.map(|v| v + 7.0);
        let shifted_gp = gp_const((1, 1, 3), 0.25 + 7.0, 0.9);
        let a = rate_estimate(&y, &gp).unwrap();
        let b = rate_estimate(&shifted_y, &shifted_gp).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rd_loss_cases() {
        let x = FeatureTensor::zeros(3, 4, 4);
        assert_eq!(
            rd_loss(&x, &x, 0.0, 0.0, LossConfig { lambda: 0.01 }, 16).unwrap(),
            0.0
        );
        // lambda = 0: loss is bpp of the latents.
        let y = x.map(|_| 0.1);
        let loss = rd_loss(&x, &y, 32.0, 16.0, LossConfig { lambda: 0.0 }, 16).unwrap();
        assert!((loss - 3.0).abs() < 1e-12);
        // lambda = 0.01, MSE = 1e-4, zero rates -> 0.0650
        let mut xh = x.clone();
        for v in xh.data.iter_mut() {
            *v = 0.01; // MSE = 1e-4
        }
        let loss = rd_loss(&x, &xh, 0.0, 0.0, LossConfig { lambda: 0.01 }, 16).unwrap();
        assert!((loss - 0.0650).abs() < 1e-6, "{loss}");
    }

    #[test]
    fn lambda_table_lookup() {
        assert_eq!(LossConfig::from_lambda_index(0).unwrap().lambda, 0.1);
        assert_eq!(LossConfig::from_lambda_index(5).unwrap().lambda, 0.001);
        assert!(LossConfig::from_lambda_index(6).is_err());
    }

    #[test]
    fn factorized_rate_positive() {
        let prior = FactorizedPrior::standard(2);
        let z = FeatureTensor::from_vec(2, 1, 2, vec![0.0, 1.0, -3.0, 2.0]).unwrap();
        let bits = rate_estimate_factorized(&z, &prior).unwrap();
        assert!(bits > 0.0 && bits.is_finite());
    }
}
