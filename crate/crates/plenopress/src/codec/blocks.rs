//! Residual bottleneck resampling blocks.
//!
//! Both directions share the 1x1 -> 3x3 -> 1x1 bottleneck with a
//! half-width middle channel and a residual path. The downsampler puts
//! stride 2 on the 3x3 and GDN after it; the upsampler keeps the 3x3 at
//! stride 1, uses IGDN, widens to 4x the output channels and finishes
//! with depth-to-space applied after the residual add (the add happens in
//! the 4-channel domain, which is equivalent and saves one permutation).

use super::layers::{subpixel_backward, subpixel_upsample, Conv2d, Gdn};
use super::tensor::FeatureTensor;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RbnBlock {
    pub up: bool,
    pub in_ch: usize,
    pub out_ch: usize,
    pub reduce: Conv2d,
    pub spatial: Conv2d,
    pub norm: Gdn,
    pub expand: Conv2d,
    pub skip: Conv2d,
}

impl RbnBlock {
    /// Stride-2 downsampler (RBND).
    pub fn down(in_ch: usize, out_ch: usize) -> Self {
        let mid = (out_ch / 2).max(1);
        RbnBlock {
            up: false,
            in_ch,
            out_ch,
            reduce: Conv2d::new(in_ch, mid, 1, 1),
            spatial: Conv2d::new(mid, mid, 3, 2),
            norm: Gdn::identity(mid, false),
            expand: Conv2d::new(mid, out_ch, 1, 1),
            skip: Conv2d::new(in_ch, out_ch, 1, 2),
        }
    }

    /// 2x subpixel upsampler (RBNU).
    pub fn upsample(in_ch: usize, out_ch: usize) -> Self {
        let mid = (out_ch / 2).max(1);
        RbnBlock {
            up: true,
            in_ch,
            out_ch,
            reduce: Conv2d::new(in_ch, mid, 1, 1),
            spatial: Conv2d::new(mid, mid, 3, 1),
            norm: Gdn::identity(mid, true),
            expand: Conv2d::new(mid, out_ch * 4, 1, 1),
            skip: Conv2d::new(in_ch, out_ch * 4, 1, 1),
        }
    }

    pub fn forward(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        let branch = self
            .expand
            .forward(&self.norm.forward(&self.spatial.forward(&self.reduce.forward(x)?)?)?)?;
        let skip = self.skip.forward(x)?;
        let sum = branch.add(&skip);
        if self.up {
            subpixel_upsample(&sum)
        } else {
            Ok(sum)
        }
    }

    /// Input gradient plus parameter gradients in [`Self::param_arrays`] order.
    pub fn backward(&self, x: &FeatureTensor, gy: &FeatureTensor) -> Result<(FeatureTensor, Vec<Vec<f64>>)> {
        let h1 = self.reduce.forward(x)?;
        let h2 = self.spatial.forward(&h1)?;
        let h3 = self.norm.forward(&h2)?;
        let gsum = if self.up { subpixel_backward(gy)? } else { gy.clone() };
        let (gh3, g_exp_w, g_exp_b) = self.expand.backward(&h3, &gsum)?;
        let (gh2, g_beta, g_gamma) = self.norm.backward(&h2, &gh3)?;
        let (gh1, g_sp_w, g_sp_b) = self.spatial.backward(&h1, &gh2)?;
        let (gx_branch, g_red_w, g_red_b) = self.reduce.backward(x, &gh1)?;
        let (gx_skip, g_skip_w, g_skip_b) = self.skip.backward(x, &gsum)?;
        let gx = gx_branch.add(&gx_skip);
        Ok((
            gx,
            vec![
                g_red_w, g_red_b, g_sp_w, g_sp_b, g_beta, g_gamma, g_exp_w, g_exp_b, g_skip_w,
                g_skip_b,
            ],
        ))
    }

    /// Named parameter arrays in a fixed order shared by serialization,
    /// gradcheck flattening, and `backward`.
    pub fn param_arrays(&self) -> Vec<(&'static str, &Vec<f64>)> {
        vec![
            ("reduce.w", &self.reduce.weights),
            ("reduce.b", &self.reduce.bias),
            ("spatial.w", &self.spatial.weights),
            ("spatial.b", &self.spatial.bias),
            ("norm.beta", &self.norm.beta),
            ("norm.gamma", &self.norm.gamma),
            ("expand.w", &self.expand.weights),
            ("expand.b", &self.expand.bias),
            ("skip.w", &self.skip.weights),
            ("skip.b", &self.skip.bias),
        ]
    }

    pub fn param_arrays_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            ("reduce.w", &mut self.reduce.weights),
            ("reduce.b", &mut self.reduce.bias),
            ("spatial.w", &mut self.spatial.weights),
            ("spatial.b", &mut self.spatial.bias),
            ("norm.beta", &mut self.norm.beta),
            ("norm.gamma", &mut self.norm.gamma),
            ("expand.w", &mut self.expand.weights),
            ("expand.b", &mut self.expand.bias),
            ("skip.w", &mut self.skip.weights),
            ("skip.b", &mut self.skip.bias),
        ]
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        if self.up {
            (h * 2, w * 2)
        } else {
            (h.div_ceil(2), w.div_ceil(2))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbnd_shape() {
        let b = RbnBlock::down(3, 8);
        let y = b.forward(&FeatureTensor::zeros(3, 16, 12)).unwrap();
        assert_eq!(y.shape(), (8, 8, 6));
    }

    #[test]
    fn rbnu_shape() {
        let b = RbnBlock::upsample(8, 4);
        let y = b.forward(&FeatureTensor::zeros(8, 5, 7)).unwrap();
        assert_eq!(y.shape(), (4, 10, 14));
    }

    #[test]
    fn zero_params_zero_output() {
        let b = RbnBlock::down(2, 4);
        let x = FeatureTensor::from_vec(2, 2, 2, (0..8).map(|i| i as f64).collect()).unwrap();
        let y = b.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }
}
