//! Primitive differentiable layers: convolution, depth-to-space, GDN/IGDN.
//!
//! Every layer provides `forward` and a matching `backward` that returns
//! the input gradient and parameter gradients; the gradient-check harness
//! relies on the pair being consistent.

use super::tensor::FeatureTensor;
use crate::error::{Error, Result};

/// 2D cross-correlation with zero padding of (k-1)/2 (odd k) and a given
/// stride. Weight layout is (out, in, k, k) row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel % 2 == 1, "only odd kernels are used here");
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            weights: vec![0.0; out_ch * in_ch * kernel * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.kernel + ky) * self.kernel + kx
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        // Same-style padding: out = ceil(in / stride).
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn forward(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        self.forward_masked(x, None)
    }

    /// Forward with an optional spatial kernel mask (1 keeps the tap,
    /// 0 silences it); the causal context model uses this.
    pub fn forward_masked(&self, x: &FeatureTensor, mask: Option<&[f64]>) -> Result<FeatureTensor> {
        if x.channels != self.in_ch {
            return Err(Error::input(format!(
                "conv2d: input has {} channels, expected {}",
                x.channels, self.in_ch
            )));
        }
        let (oh, ow) = self.out_dims(x.height, x.width);
        let mut out = FeatureTensor::zeros(self.out_ch, oh, ow);
        let pad = (self.kernel / 2) as isize;
        for o in 0..self.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[o];
                    let base_y = (oy * self.stride) as isize - pad;
                    let base_x = (ox * self.stride) as isize - pad;
                    for i in 0..self.in_ch {
                        for ky in 0..self.kernel {
                            let sy = base_y + ky as isize;
                            if sy < 0 || sy >= x.height as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let sx = base_x + kx as isize;
                                if sx < 0 || sx >= x.width as isize {
                                    continue;
                                }
                                let m = mask.map_or(1.0, |m| m[ky * self.kernel + kx]);
                                if m == 0.0 {
                                    continue;
                                }
                                acc += m
                                    * self.weights[self.widx(o, i, ky, kx)]
                                    * x.get(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(o, oy, ox, acc);
                }
            }
        }
        Ok(out)
    }

    /// Gradients of a scalar loss with respect to input, weights, and bias
    /// given the upstream gradient `gy`.
    pub fn backward(
        &self,
        x: &FeatureTensor,
        gy: &FeatureTensor,
    ) -> Result<(FeatureTensor, Vec<f64>, Vec<f64>)> {
        let (oh, ow) = self.out_dims(x.height, x.width);
        if gy.shape() != (self.out_ch, oh, ow) {
            return Err(Error::input("conv2d backward: gradient shape mismatch"));
        }
        let mut gx = FeatureTensor::zeros(x.channels, x.height, x.width);
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let pad = (self.kernel / 2) as isize;
        for o in 0..self.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gy.get(o, oy, ox);
                    gb[o] += g;
                    let base_y = (oy * self.stride) as isize - pad;
                    let base_x = (ox * self.stride) as isize - pad;
                    for i in 0..self.in_ch {
                        for ky in 0..self.kernel {
                            let sy = base_y + ky as isize;
                            if sy < 0 || sy >= x.height as isize {
                                continue;
                            }
                            for kx in 0..self.kernel {
                                let sx = base_x + kx as isize;
                                if sx < 0 || sx >= x.width as isize {
                                    continue;
                                }
                                let w = self.weights[self.widx(o, i, ky, kx)];
                                let xv = x.get(i, sy as usize, sx as usize);
                                gw[self.widx(o, i, ky, kx)] += g * xv;
                                let gi = gx.idx(i, sy as usize, sx as usize);
                                gx.data[gi] += g * w;
                            }
                        }
                    }
                }
            }
        }
        Ok((gx, gw, gb))
    }
}

/// Depth-to-space by a factor of 2: input channel block `c*4 + dy*2 + dx`
/// lands at output channel `c`, spatial position (2y+dy, 2x+dx). Channel
/// blocks are contiguous per output channel, subpixel positions row-major.
pub fn subpixel_upsample(x: &FeatureTensor) -> Result<FeatureTensor> {
    if x.channels % 4 != 0 {
        return Err(Error::input("subpixel_upsample: channels must be divisible by 4"));
    }
    let oc = x.channels / 4;
    let mut out = FeatureTensor::zeros(oc, x.height * 2, x.width * 2);
    for c in 0..oc {
        for dy in 0..2 {
            for dx in 0..2 {
                let ic = c * 4 + dy * 2 + dx;
                for y in 0..x.height {
                    for xx in 0..x.width {
                        out.set(c, 2 * y + dy, 2 * xx + dx, x.get(ic, y, xx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient pass-through of [`subpixel_upsample`] (a pure permutation).
pub fn subpixel_backward(gy: &FeatureTensor) -> Result<FeatureTensor> {
    if gy.height % 2 != 0 || gy.width % 2 != 0 {
        return Err(Error::input("subpixel backward: odd output dims"));
    }
    let mut gx = FeatureTensor::zeros(gy.channels * 4, gy.height / 2, gy.width / 2);
    for c in 0..gy.channels {
        for dy in 0..2 {
            for dx in 0..2 {
                let ic = c * 4 + dy * 2 + dx;
                for y in 0..gx.height {
                    for x in 0..gx.width {
                        gx.set(ic, y, x, gy.get(c, 2 * y + dy, 2 * x + dx));
                    }
                }
            }
        }
    }
    Ok(gx)
}

pub const GDN_BETA_MIN: f64 = 1e-6;

/// Generalized divisive normalization and its multiplicative inverse.
///
/// GDN:  y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2)
/// IGDN: y_i = x_i * sqrt(beta_i + sum_j gamma_ij * x_j^2)
///
/// per spatial location. IGDN here is the decoder layer (closed
/// multiplicative form), not a numerical inversion of GDN.
#[derive(Debug, Clone, PartialEq)]
pub struct Gdn {
    pub channels: usize,
    /// beta, length C, each > GDN_BETA_MIN.
    pub beta: Vec<f64>,
    /// gamma, C x C row-major, each >= 0.
    pub gamma: Vec<f64>,
    pub inverse: bool,
}

impl Gdn {
    pub fn identity(channels: usize, inverse: bool) -> Self {
        Gdn {
            channels,
            beta: vec![1.0; channels],
            gamma: vec![0.0; channels * channels],
            inverse,
        }
    }

    fn check(&self) -> Result<()> {
        if self.beta.iter().any(|&b| b <= 0.0) {
            return Err(Error::input("gdn: beta must be positive"));
        }
        Ok(())
    }

    /// Divisor^2 per (channel, location): beta_i + sum_j gamma_ij x_j^2.
    fn denom_sq(&self, x: &FeatureTensor) -> Vec<f64> {
        let hw = x.height * x.width;
        let c = self.channels;
        let mut sq = vec![0.0; c * hw];
        for j in 0..c {
            for p in 0..hw {
                let v = x.data[j * hw + p];
                sq[j * hw + p] = v * v;
            }
        }
        let mut den = vec![0.0; c * hw];
        for i in 0..c {
            for p in 0..hw {
                den[i * hw + p] = self.beta[i];
            }
            for j in 0..c {
                let g = self.gamma[i * c + j];
                if g == 0.0 {
                    continue;
                }
                for p in 0..hw {
                    den[i * hw + p] += g * sq[j * hw + p];
                }
            }
        }
        den
    }

    pub fn forward(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        if x.channels != self.channels {
            return Err(Error::input("gdn: channel mismatch"));
        }
        self.check()?;
        let den = self.denom_sq(x);
        let mut out = x.clone();
        for (v, d) in out.data.iter_mut().zip(&den) {
            let s = d.sqrt();
            *v = if self.inverse { *v * s } else { *v / s };
        }
        Ok(out)
    }

    /// Input, beta, and gamma gradients.
    pub fn backward(
        &self,
        x: &FeatureTensor,
        gy: &FeatureTensor,
    ) -> Result<(FeatureTensor, Vec<f64>, Vec<f64>)> {
        if !x.same_shape(gy) {
            return Err(Error::input("gdn backward: shape mismatch"));
        }
        let c = self.channels;
        let hw = x.height * x.width;
        let den = self.denom_sq(x);
        let mut gx = FeatureTensor::zeros(c, x.height, x.width);
        let mut gbeta = vec![0.0; c];
        let mut ggamma = vec![0.0; c * c];
        // sign: y_i = x_i * den_i^(+-1/2); d y_i / d den_i = +-1/2 x_i den^(+-1/2 - 1)
        let e = if self.inverse { 0.5 } else { -0.5 };
        for p in 0..hw {
            // t_i = gy_i * e * x_i * den_i^(e-1): shared factor for den-path.
            for i in 0..c {
                let d = den[i * hw + p];
                let xi = x.data[i * hw + p];
                let g = gy.data[i * hw + p];
                let pow_e = if self.inverse { d.sqrt() } else { 1.0 / d.sqrt() };
                let pow_em1 = pow_e / d;
                let t = g * e * xi * pow_em1;
                // direct term
                gx.data[i * hw + p] += g * pow_e;
                gbeta[i] += t;
                for j in 0..c {
                    let xj = x.data[j * hw + p];
                    let gam = self.gamma[i * c + j];
                    ggamma[i * c + j] += t * xj * xj;
                    if gam != 0.0 {
                        gx.data[j * hw + p] += t * gam * 2.0 * xj;
                    }
                }
            }
        }
        Ok((gx, gbeta, ggamma))
    }
}

/// Leaky-free rectifier used in the hyper path.
pub fn relu(x: &FeatureTensor) -> FeatureTensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &FeatureTensor, gy: &FeatureTensor) -> FeatureTensor {
    let mut gx = gy.clone();
    for (g, &v) in gx.data.iter_mut().zip(&x.data) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}
