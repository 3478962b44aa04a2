//! The codec network: analysis/synthesis transforms, hyperprior, causal
//! context model, entropy parameter estimation, and parameter storage.
//!
//! Main path: four stride-2 stages each way, N channels, with the global
//! attention module wrapped around the third down-stage and its mirror
//! up-stage. Hyper path: two stride-2 stages each way over M channels,
//! attention on the first down-stage and its mirror. Parameters are
//! f32-valued (stored and initialized through f32), computation is f64.

use super::attention::{AttentionStage, GlobalAttention, Linear, Resampler};
use super::blocks::RbnBlock;
use super::layers::{relu, subpixel_upsample, Conv2d, Gdn};
use super::tensor::FeatureTensor;
use crate::detmath::det_exp;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Scale floor of the Gaussian conditional; keeps every CDF interval
/// representable in the 16-bit coder tables.
pub const SIGMA_MIN: f64 = 0.11;

/// The Lagrange multipliers the rate points are trained at.
pub const LAMBDA_TABLE: [f64; 6] = [0.1, 0.05, 0.025, 0.01, 0.005, 0.001];

/// Per-element Gaussian parameters for the conditional entropy model.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: FeatureTensor,
    pub sigma: FeatureTensor,
}

/// Per-channel logistic mixture prior for the hyper-latent.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPrior {
    pub channels: usize,
    pub components: usize,
    /// channels x K, rows sum to 1.
    pub weights: Vec<f64>,
    pub locs: Vec<f64>,
    /// channels x K, all positive.
    pub scales: Vec<f64>,
}

impl FactorizedPrior {
    pub fn standard(channels: usize) -> Self {
        FactorizedPrior {
            channels,
            components: 1,
            weights: vec![1.0; channels],
            locs: vec![0.0; channels],
            scales: vec![1.0; channels],
        }
    }

    /// Mixture CDF at v for one channel.
    pub fn cdf(&self, channel: usize, v: f64) -> f64 {
        let k = self.components;
        let mut acc = 0.0;
        for i in 0..k {
            let loc = self.locs[channel * k + i];
            let scale = self.scales[channel * k + i];
            let t = (v - loc) / scale;
            // logistic sigmoid via the deterministic exponential
            let s = 1.0 / (1.0 + det_exp(-t));
            acc += self.weights[channel * k + i] * s;
        }
        acc
    }

    /// Mass of the unit interval [v-0.5, v+0.5).
    pub fn interval_mass(&self, channel: usize, v: f64) -> f64 {
        (self.cdf(channel, v + 0.5) - self.cdf(channel, v - 0.5)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub m: usize,
    pub heads: usize,
    // main analysis: 4 down-stages
    pub enc1: RbnBlock,
    pub enc2: RbnBlock,
    pub enc3: GlobalAttention,
    pub enc4: RbnBlock,
    // hyper analysis: 2 down-stages
    pub ha_in: Conv2d,
    pub ha_att: GlobalAttention,
    pub ha_out: Conv2d,
    // hyper synthesis
    pub hs_up: Conv2d,
    pub hs_att: GlobalAttention,
    pub hs_head: Conv2d,
    // causal context over y-hat plus parameter fusion
    pub ctx: Conv2d,
    pub fuse1: Conv2d,
    pub fuse2: Conv2d,
    pub fuse3: Conv2d,
    // main synthesis: 4 up-stages
    pub dec1: RbnBlock,
    pub dec2: GlobalAttention,
    pub dec3: RbnBlock,
    pub dec4: Conv2d,
    pub prior: FactorizedPrior,
}

/// Causal 5x5 mask: taps strictly before the center in raster order.
pub fn causal_mask(k: usize) -> Vec<f64> {
    let c = k / 2;
    let mut m = vec![0.0; k * k];
    for ky in 0..k {
        for kx in 0..k {
            if ky < c || (ky == c && kx < c) {
                m[ky * k + kx] = 1.0;
            }
        }
    }
    m
}

struct InitRng(ChaCha8Rng);

impl InitRng {
    /// Approximately standard normal from twelve uniforms; uses only
    /// additions so initialization is platform-exact.
    fn normal(&mut self) -> f64 {
        let mut acc = -6.0;
        for _ in 0..12 {
            acc += self.0.gen::<f64>();
        }
        acc
    }

    fn he_conv(&mut self, conv: &mut Conv2d) {
        let fan_in = (conv.in_ch * conv.kernel * conv.kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        for w in conv.weights.iter_mut() {
            *w = self.normal() * std;
        }
    }

    fn identity_noise_linear(&mut self, l: &mut Linear) {
        debug_assert_eq!(l.in_dim, l.out_dim);
        for (i, w) in l.weights.iter_mut().enumerate() {
            let diag = i / l.in_dim == i % l.in_dim;
            *w = if diag { 1.0 } else { 0.0 } + 0.01 * self.normal();
        }
    }

    fn gdn(&mut self, g: &mut Gdn) {
        for b in g.beta.iter_mut() {
            *b = 1.0;
        }
        for (i, v) in g.gamma.iter_mut().enumerate() {
            *v = if i / g.channels == i % g.channels { 1e-3 } else { 0.0 };
        }
    }

    fn rbn(&mut self, b: &mut RbnBlock) {
        self.he_conv(&mut b.reduce);
        self.he_conv(&mut b.spatial);
        self.gdn(&mut b.norm);
        self.he_conv(&mut b.expand);
        self.he_conv(&mut b.skip);
    }

    fn stage(&mut self, s: &mut AttentionStage) {
        self.identity_noise_linear(&mut s.wq);
        self.identity_noise_linear(&mut s.wk);
        self.identity_noise_linear(&mut s.wv);
        self.identity_noise_linear(&mut s.proj1);
        self.identity_noise_linear(&mut s.proj2);
    }

    fn attention(&mut self, a: &mut GlobalAttention) {
        match &mut a.resampler {
            Resampler::ConvStride2(c) | Resampler::SubpixelConv(c) => self.he_conv(c),
            Resampler::Rbnd(b) | Resampler::Rbnu(b) => self.rbn(b),
        }
        self.stage(&mut a.stage1);
        self.stage(&mut a.stage2);
    }
}

impl ModelParams {
    /// Default head count: 8 when the channel width allows it.
    pub fn default_heads(n: usize) -> usize {
        if n >= 64 && n % 8 == 0 {
            8
        } else {
            1
        }
    }

    /// Deterministic seeded initialization. All values are rounded through
    /// f32 so an in-memory model is identical to its saved-and-reloaded
    /// self.
    pub fn init(n: usize, m: usize, heads: usize, seed: u64) -> Result<ModelParams> {
        if n == 0 || m == 0 || heads == 0 || n % heads != 0 || m % heads != 0 {
            return Err(Error::input(format!(
                "bad model config: n={n}, m={m}, heads={heads} (heads must divide both)"
            )));
        }
        let mut params = ModelParams {
            n,
            m,
            heads,
            enc1: RbnBlock::down(3, n),
            enc2: RbnBlock::down(n, n),
            enc3: GlobalAttention {
                heads,
                resampler: Resampler::Rbnd(RbnBlock::down(n, n)),
                stage1: AttentionStage::identity(n),
                stage2: AttentionStage::identity(n),
            },
            enc4: RbnBlock::down(n, n),
            ha_in: Conv2d::new(n, m, 3, 1),
            ha_att: GlobalAttention {
                heads,
                resampler: Resampler::ConvStride2(Conv2d::new(m, m, 3, 2)),
                stage1: AttentionStage::identity(m),
                stage2: AttentionStage::identity(m),
            },
            ha_out: Conv2d::new(m, m, 3, 2),
            hs_up: Conv2d::new(m, 4 * m, 3, 1),
            hs_att: GlobalAttention {
                heads,
                resampler: Resampler::SubpixelConv(Conv2d::new(m, 4 * m, 3, 1)),
                stage1: AttentionStage::identity(m),
                stage2: AttentionStage::identity(m),
            },
            hs_head: Conv2d::new(m, 2 * n, 3, 1),
            ctx: Conv2d::new(n, 2 * n, 5, 1),
            fuse1: Conv2d::new(4 * n, 4 * n, 1, 1),
            fuse2: Conv2d::new(4 * n, 3 * n, 1, 1),
            fuse3: Conv2d::new(3 * n, 2 * n, 1, 1),
            dec1: RbnBlock::upsample(n, n),
            dec2: GlobalAttention {
                heads,
                resampler: Resampler::Rbnu(RbnBlock::upsample(n, n)),
                stage1: AttentionStage::identity(n),
                stage2: AttentionStage::identity(n),
            },
            dec3: RbnBlock::upsample(n, n),
            dec4: Conv2d::new(n, 12, 3, 1),
            prior: FactorizedPrior::standard(m),
        };
        let mut rng = InitRng(ChaCha8Rng::seed_from_u64(seed));
        rng.rbn(&mut params.enc1);
        rng.rbn(&mut params.enc2);
        rng.attention(&mut params.enc3);
        rng.rbn(&mut params.enc4);
        rng.he_conv(&mut params.ha_in);
        rng.attention(&mut params.ha_att);
        rng.he_conv(&mut params.ha_out);
        rng.he_conv(&mut params.hs_up);
        rng.attention(&mut params.hs_att);
        rng.he_conv(&mut params.hs_head);
        rng.he_conv(&mut params.ctx);
        rng.he_conv(&mut params.fuse1);
        rng.he_conv(&mut params.fuse2);
        rng.he_conv(&mut params.fuse3);
        rng.rbn(&mut params.dec1);
        rng.attention(&mut params.dec2);
        rng.rbn(&mut params.dec3);
        rng.he_conv(&mut params.dec4);
        params.round_to_f32();
        Ok(params)
    }

    fn round_to_f32(&mut self) {
        self.for_each_block_mut(&mut |_, _, data| {
            for v in data.iter_mut() {
                *v = *v as f32 as f64;
            }
        });
    }

    // --- forward passes ---

    /// Main encoder: x (3 x H x W, H and W multiples of 64) -> y (N x H/16 x W/16).
    pub fn main_analysis(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        if x.channels != 3 {
            return Err(Error::input("analysis input must have 3 channels"));
        }
        if x.height % 64 != 0 || x.width % 64 != 0 {
            return Err(Error::input(format!(
                "analysis input {}x{} must be a multiple of 64",
                x.width, x.height
            )));
        }
        let h1 = self.enc1.forward(x)?;
        let h2 = self.enc2.forward(&h1)?;
        let h3 = self.enc3.forward(&h2)?;
        let y = self.enc4.forward(&h3)?;
        y.check_finite("main analysis")?;
        Ok(y)
    }

    /// Hyper encoder: y -> z (M x H/64 x W/64).
    pub fn hyper_analysis(&self, y: &FeatureTensor) -> Result<FeatureTensor> {
        let h = relu(&self.ha_in.forward(y)?);
        let h = relu(&self.ha_att.forward(&h)?);
        let z = self.ha_out.forward(&h)?;
        z.check_finite("hyper analysis")?;
        Ok(z)
    }

    /// Full analysis: (y, z).
    pub fn forward_analysis(&self, x: &FeatureTensor) -> Result<(FeatureTensor, FeatureTensor)> {
        let y = self.main_analysis(x)?;
        let z = self.hyper_analysis(&y)?;
        Ok((y, z))
    }

    /// Main decoder: y-hat -> x-hat (3 x 16h x 16w).
    pub fn forward_synthesis(&self, y_hat: &FeatureTensor) -> Result<FeatureTensor> {
        let h1 = self.dec1.forward(y_hat)?;
        let h2 = self.dec2.forward(&h1)?;
        let h3 = self.dec3.forward(&h2)?;
        let x = subpixel_upsample(&self.dec4.forward(&h3)?)?;
        x.check_finite("main synthesis")?;
        Ok(x)
    }

    /// Hyper decoder: z-hat -> entropy features (2N at y resolution).
    pub fn hyper_synthesis(&self, z_hat: &FeatureTensor) -> Result<FeatureTensor> {
        let h = relu(&subpixel_upsample(&self.hs_up.forward(z_hat)?)?);
        let h = relu(&self.hs_att.forward(&h)?);
        let psi = self.hs_head.forward(&h)?;
        psi.check_finite("hyper synthesis")?;
        Ok(psi)
    }

    /// Causal context features (2N) at one position from already-known
    /// y-hat values strictly before (py, px) in raster order. Both the
    /// encoder loop and the decoder loop call exactly this function, so
    /// their arithmetic agrees to the bit.
    pub fn context_at(&self, y_hat: &FeatureTensor, py: usize, px: usize) -> Vec<f64> {
        let k = self.ctx.kernel;
        let c = k / 2;
        let n_in = self.ctx.in_ch;
        let n_out = self.ctx.out_ch;
        let mut out = self.ctx.bias.clone();
        for ky in 0..k {
            let sy = py as isize + ky as isize - c as isize;
            if sy < 0 || sy >= y_hat.height as isize {
                continue;
            }
            // causal: rows above the center fully, center row left of center
            let kx_max = if ky < c { k } else if ky == c { c } else { 0 };
            for kx in 0..kx_max {
                let sx = px as isize + kx as isize - c as isize;
                if sx < 0 || sx >= y_hat.width as isize {
                    continue;
                }
                for i in 0..n_in {
                    let v = y_hat.get(i, sy as usize, sx as usize);
                    if v == 0.0 {
                        continue;
                    }
                    for o in 0..n_out {
                        out[o] += self.ctx.weights[((o * n_in + i) * k + ky) * k + kx] * v;
                    }
                }
            }
        }
        out
    }

    /// (mu, sigma) for all N channels at one position, from the hyper
    /// features psi and the causal context vector.
    pub fn entropy_parameters_at(
        &self,
        psi: &FeatureTensor,
        ctx_vec: &[f64],
        py: usize,
        px: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut joint = Vec::with_capacity(4 * n);
        for c in 0..2 * n {
            joint.push(psi.get(c, py, px));
        }
        joint.extend_from_slice(ctx_vec);
        let h = conv1x1_vec(&self.fuse1, &joint);
        let h: Vec<f64> = h.iter().map(|&v| v.max(0.0)).collect();
        let h = conv1x1_vec(&self.fuse2, &h);
        let h: Vec<f64> = h.iter().map(|&v| v.max(0.0)).collect();
        let out = conv1x1_vec(&self.fuse3, &h);
        let mu = out[..n].to_vec();
        let sigma = out[n..].iter().map(|&s| s.max(SIGMA_MIN)).collect();
        (mu, sigma)
    }

    /// Full-map entropy parameters. Equals the progressive per-position
    /// computation because the context never reads at or past the current
    /// raster position.
    pub fn entropy_parameters(
        &self,
        z_hat: &FeatureTensor,
        y_hat: &FeatureTensor,
    ) -> Result<GaussianParams> {
        let psi = self.hyper_synthesis(z_hat)?;
        if psi.height != y_hat.height || psi.width != y_hat.width {
            return Err(Error::input("entropy_parameters: psi and y-hat resolution mismatch"));
        }
        let n = self.n;
        let mut mu = FeatureTensor::zeros(n, y_hat.height, y_hat.width);
        let mut sigma = FeatureTensor::zeros(n, y_hat.height, y_hat.width);
        for py in 0..y_hat.height {
            for px in 0..y_hat.width {
                let ctx = self.context_at(y_hat, py, px);
                let (m, s) = self.entropy_parameters_at(&psi, &ctx, py, px);
                for c in 0..n {
                    mu.set(c, py, px, m[c]);
                    sigma.set(c, py, px, s[c]);
                }
            }
        }
        Ok(GaussianParams { mu, sigma })
    }

    // --- serialization ---

    fn for_each_block(&self, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        let conv = |name: &str, c: &Conv2d, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            f(format!("{name}.w"), vec![c.out_ch, c.in_ch, c.kernel, c.kernel], &c.weights);
            f(format!("{name}.b"), vec![c.out_ch], &c.bias);
        };
        let gdn = |name: &str, g: &Gdn, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            f(format!("{name}.beta"), vec![g.channels], &g.beta);
            f(format!("{name}.gamma"), vec![g.channels, g.channels], &g.gamma);
        };
        let rbn = |name: &str, b: &RbnBlock, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            conv(&format!("{name}.reduce"), &b.reduce, f);
            conv(&format!("{name}.spatial"), &b.spatial, f);
            gdn(&format!("{name}.norm"), &b.norm, f);
            conv(&format!("{name}.expand"), &b.expand, f);
            conv(&format!("{name}.skip"), &b.skip, f);
        };
        let lin = |name: &str, l: &Linear, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            f(format!("{name}.w"), vec![l.out_dim, l.in_dim], &l.weights);
            f(format!("{name}.b"), vec![l.out_dim], &l.bias);
        };
        let stage = |name: &str, s: &AttentionStage, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            lin(&format!("{name}.wq"), &s.wq, f);
            lin(&format!("{name}.wk"), &s.wk, f);
            lin(&format!("{name}.wv"), &s.wv, f);
            lin(&format!("{name}.proj1"), &s.proj1, f);
            lin(&format!("{name}.proj2"), &s.proj2, f);
        };
        let att = |name: &str, a: &GlobalAttention, f: &mut dyn FnMut(String, Vec<usize>, &[f64])| {
            match &a.resampler {
                Resampler::ConvStride2(c) | Resampler::SubpixelConv(c) => {
                    conv(&format!("{name}.resampler"), c, f)
                }
                Resampler::Rbnd(b) | Resampler::Rbnu(b) => rbn(&format!("{name}.resampler"), b, f),
            }
            stage(&format!("{name}.stage1"), &a.stage1, f);
            stage(&format!("{name}.stage2"), &a.stage2, f);
        };

        rbn("enc1", &self.enc1, f);
        rbn("enc2", &self.enc2, f);
        att("enc3", &self.enc3, f);
        rbn("enc4", &self.enc4, f);
        conv("ha_in", &self.ha_in, f);
        att("ha_att", &self.ha_att, f);
        conv("ha_out", &self.ha_out, f);
        conv("hs_up", &self.hs_up, f);
        att("hs_att", &self.hs_att, f);
        conv("hs_head", &self.hs_head, f);
        conv("ctx", &self.ctx, f);
        conv("fuse1", &self.fuse1, f);
        conv("fuse2", &self.fuse2, f);
        conv("fuse3", &self.fuse3, f);
        rbn("dec1", &self.dec1, f);
        att("dec2", &self.dec2, f);
        rbn("dec3", &self.dec3, f);
        conv("dec4", &self.dec4, f);
        let k = self.prior.components;
        f("prior.weights".into(), vec![self.prior.channels, k], &self.prior.weights);
        f("prior.locs".into(), vec![self.prior.channels, k], &self.prior.locs);
        f("prior.scales".into(), vec![self.prior.channels, k], &self.prior.scales);
    }

    fn for_each_block_mut(&mut self, f: &mut dyn FnMut(String, Vec<usize>, &mut [f64])) {
        // Mirrors for_each_block; kept in sync by the roundtrip test.
        macro_rules! conv {
            ($name:expr, $c:expr) => {{
                let c = $c;
                f(format!("{}.w", $name), vec![c.out_ch, c.in_ch, c.kernel, c.kernel], &mut c.weights);
                f(format!("{}.b", $name), vec![c.out_ch], &mut c.bias);
            }};
        }
        macro_rules! gdn {
            ($name:expr, $g:expr) => {{
                let g = $g;
                f(format!("{}.beta", $name), vec![g.channels], &mut g.beta);
                f(format!("{}.gamma", $name), vec![g.channels, g.channels], &mut g.gamma);
            }};
        }
        macro_rules! rbn {
            ($name:expr, $b:expr) => {{
                let b = $b;
                conv!(format!("{}.reduce", $name), &mut b.reduce);
                conv!(format!("{}.spatial", $name), &mut b.spatial);
                gdn!(format!("{}.norm", $name), &mut b.norm);
                conv!(format!("{}.expand", $name), &mut b.expand);
                conv!(format!("{}.skip", $name), &mut b.skip);
            }};
        }
        macro_rules! lin {
            ($name:expr, $l:expr) => {{
                let l = $l;
                f(format!("{}.w", $name), vec![l.out_dim, l.in_dim], &mut l.weights);
                f(format!("{}.b", $name), vec![l.out_dim], &mut l.bias);
            }};
        }
        macro_rules! stage {
            ($name:expr, $s:expr) => {{
                let s = $s;
                lin!(format!("{}.wq", $name), &mut s.wq);
                lin!(format!("{}.wk", $name), &mut s.wk);
                lin!(format!("{}.wv", $name), &mut s.wv);
                lin!(format!("{}.proj1", $name), &mut s.proj1);
                lin!(format!("{}.proj2", $name), &mut s.proj2);
            }};
        }
        macro_rules! att {
            ($name:expr, $a:expr) => {{
                let a = $a;
                match &mut a.resampler {
                    Resampler::ConvStride2(c) | Resampler::SubpixelConv(c) => {
                        conv!(format!("{}.resampler", $name), c)
                    }
                    Resampler::Rbnd(b) | Resampler::Rbnu(b) => {
                        rbn!(format!("{}.resampler", $name), b)
                    }
                }
                stage!(format!("{}.stage1", $name), &mut a.stage1);
                stage!(format!("{}.stage2", $name), &mut a.stage2);
            }};
        }
        rbn!("enc1", &mut self.enc1);
        rbn!("enc2", &mut self.enc2);
        att!("enc3", &mut self.enc3);
        rbn!("enc4", &mut self.enc4);
        conv!("ha_in", &mut self.ha_in);
        att!("ha_att", &mut self.ha_att);
        conv!("ha_out", &mut self.ha_out);
        conv!("hs_up", &mut self.hs_up);
        att!("hs_att", &mut self.hs_att);
        conv!("hs_head", &mut self.hs_head);
        conv!("ctx", &mut self.ctx);
        conv!("fuse1", &mut self.fuse1);
        conv!("fuse2", &mut self.fuse2);
        conv!("fuse3", &mut self.fuse3);
        rbn!("dec1", &mut self.dec1);
        att!("dec2", &mut self.dec2);
        rbn!("dec3", &mut self.dec3);
        conv!("dec4", &mut self.dec4);
        let k = self.prior.components;
        let ch = self.prior.channels;
        f("prior.weights".into(), vec![ch, k], &mut self.prior.weights);
        f("prior.locs".into(), vec![ch, k], &mut self.prior.locs);
        f("prior.scales".into(), vec![ch, k], &mut self.prior.scales);
    }

    const MAGIC: &'static [u8; 4] = b"FPMP";
    const VERSION: u8 = 1;

    /// Versioned little-endian container: magic, version, config block,
    /// layer table, then raw f32 blocks in table order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blocks: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        self.for_each_block(&mut |name, shape, data| {
            blocks.push((name, shape, data.iter().map(|&v| v as f32).collect()));
        });
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.push(Self::VERSION);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.heads as u32).to_le_bytes());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, shape, _) in &blocks {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for (_, _, data) in &blocks {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| Error::stream("model: short header"))?;
        if &magic != Self::MAGIC {
            return Err(Error::stream("model: bad magic"));
        }
        let mut b1 = [0u8; 1];
        cur.read_exact(&mut b1).map_err(|_| Error::stream("model: short header"))?;
        if b1[0] != Self::VERSION {
            return Err(Error::stream(format!("model: unsupported version {}", b1[0])));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |cur: &mut std::io::Cursor<&[u8]>| -> Result<u32> {
            cur.read_exact(&mut u32buf).map_err(|_| Error::stream("model: short header"))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let n = read_u32(&mut cur)? as usize;
        let m = read_u32(&mut cur)? as usize;
        let heads = read_u32(&mut cur)? as usize;
        let count = read_u32(&mut cur)? as usize;
        let mut table: Vec<(String, Vec<usize>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut u16buf = [0u8; 2];
            cur.read_exact(&mut u16buf).map_err(|_| Error::stream("model: short table"))?;
            let name_len = u16::from_le_bytes(u16buf) as usize;
            let mut name = vec![0u8; name_len];
            cur.read_exact(&mut name).map_err(|_| Error::stream("model: short table"))?;
            let mut rank = [0u8; 1];
            cur.read_exact(&mut rank).map_err(|_| Error::stream("model: short table"))?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                cur.read_exact(&mut u32buf).map_err(|_| Error::stream("model: short table"))?;
                shape.push(u32::from_le_bytes(u32buf) as usize);
            }
            let name = String::from_utf8(name).map_err(|_| Error::stream("model: bad block name"))?;
            table.push((name, shape));
        }
        let mut data: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
        for (name, shape) in table {
            let len: usize = shape.iter().product();
            let mut block = Vec::with_capacity(len);
            for _ in 0..len {
                cur.read_exact(&mut u32buf).map_err(|_| Error::stream("model: short data"))?;
                block.push(f64::from(f32::from_le_bytes(u32buf)));
            }
            data.insert(name, (shape, block));
        }
        let mut params = ModelParams::init(n, m, heads, 0)?;
        let mut missing: Vec<String> = Vec::new();
        params.for_each_block_mut(&mut |name, shape, dst| {
            match data.remove(&name) {
                Some((fshape, block)) if fshape == shape && block.len() == dst.len() => {
                    dst.copy_from_slice(&block);
                }
                Some(_) => missing.push(format!("{name} (shape mismatch)")),
                None => missing.push(name),
            }
        });
        if !missing.is_empty() {
            return Err(Error::stream(format!("model: bad blocks: {}", missing.join(", "))));
        }
        if !data.is_empty() {
            return Err(Error::stream(format!(
                "model: {} unknown extra blocks",
                data.len()
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes)?;
        // Text manifest: layer names, shapes, checksums.
        let mut manifest = String::new();
        self.for_each_block(&mut |name, shape, data| {
            let mut hasher = Sha256::new();
            for v in data {
                hasher.update((*v as f32).to_le_bytes());
            }
            let digest = hasher.finalize();
            let shape_str: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!(
                "{} [{}] {}\n",
                name,
                shape_str.join("x"),
                hex16(&digest[..8])
            ));
        });
        let mut mpath = path.as_os_str().to_os_string();
        mpath.push(".manifest.txt");
        let mut file = std::fs::File::create(mpath)?;
        file.write_all(manifest.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        ModelParams::from_bytes(&std::fs::read(path)?)
    }

    /// 16-byte identity hash of the serialized parameters.
    pub fn model_id(&self) -> [u8; 16] {
        let digest = Sha256::digest(self.to_bytes());
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        id
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// 1x1 convolution applied to a single per-position vector.
fn conv1x1_vec(conv: &Conv2d, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(conv.kernel, 1);
    debug_assert_eq!(conv.in_ch, x.len());
    let mut out = conv.bias.clone();
    for (o, ov) in out.iter_mut().enumerate() {
        let wrow = &conv.weights[o * conv.in_ch..(o + 1) * conv.in_ch];
        for (w, v) in wrow.iter().zip(x) {
            *ov += w * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelParams {
        ModelParams::init(8, 12, 1, 0).unwrap()
    }

    #[test]
    fn toy_shapes() {
        let p = toy();
        let x = FeatureTensor::zeros(3, 64, 64);
        let (y, z) = p.forward_analysis(&x).unwrap();
        assert_eq!(y.shape(), (8, 4, 4));
        assert_eq!(z.shape(), (12, 1, 1));
        let xhat = p.forward_synthesis(&y).unwrap();
        assert_eq!(xhat.shape(), (3, 64, 64));
        let psi = p.hyper_synthesis(&z).unwrap();
        assert_eq!(psi.shape(), (16, 4, 4));
    }

    #[test]
    fn analysis_rejects_bad_dims() {
        let p = toy();
        assert!(p.main_analysis(&FeatureTensor::zeros(3, 60, 64)).is_err());
        assert!(p.main_analysis(&FeatureTensor::zeros(1, 64, 64)).is_err());
    }

    #[test]
    fn deterministic_forward() {
        let p = toy();
        let x = FeatureTensor::from_vec(
            3,
            64,
            64,
            (0..3 * 64 * 64).map(|i| ((i * 37) % 256) as f64 / 255.0).collect(),
        )
        .unwrap();
        let (y1, _) = p.forward_analysis(&x).unwrap();
        let (y2, _) = p.forward_analysis(&x).unwrap();
        assert_eq!(y1.data, y2.data);
    }

    #[test]
    fn no_nan_across_seeds() {
        // forward_synthesis(forward_analysis) stays finite for random
        // inputs across 100 seeds.
        use rand::{Rng, SeedableRng};
        let p = toy();
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = FeatureTensor::from_vec(
                3,
                64,
                64,
                (0..3 * 64 * 64).map(|_| rng.gen::<f64>()).collect(),
            )
            .unwrap();
            let (y, z) = p.forward_analysis(&x).unwrap();
            let xh = p.forward_synthesis(&y).unwrap();
            xh.check_finite("synthesis").unwrap();
            z.check_finite("z").unwrap();
        }
    }

    #[test]
    fn serialization_roundtrip_bit_exact() {
        let p = ModelParams::init(8, 12, 2, 123).unwrap();
        let bytes = p.to_bytes();
        let q = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.model_id(), q.model_id());
        let r = ModelParams::init(8, 12, 2, 124).unwrap();
        assert_ne!(p.model_id(), r.model_id());
    }

    #[test]
    fn corrupt_model_rejected() {
        let p = toy();
        let mut bytes = p.to_bytes();
        bytes[0] = b'X';
        assert!(ModelParams::from_bytes(&bytes).is_err());
        let mut short = p.to_bytes();
        short.truncate(short.len() - 10);
        assert!(ModelParams::from_bytes(&short).is_err());
    }

    #[test]
    fn init_is_f32_exact() {
        // init -> save -> load must be the identity.
        let p = toy();
        let q = ModelParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn sigma_clamped() {
        let mut p = toy();
        // Force the sigma head to a large negative bias.
        let n = p.n;
        for b in p.fuse3.bias[n..].iter_mut() {
            *b = -5.0;
        }
        for w in p.fuse3.weights.iter_mut() {
            *w = 0.0;
        }
        let y_hat = FeatureTensor::zeros(n, 4, 4);
        let z_hat = FeatureTensor::zeros(p.m, 1, 1);
        let gp = p.entropy_parameters(&z_hat, &y_hat).unwrap();
        assert!(gp.sigma.data.iter().all(|&s| s == SIGMA_MIN));
    }

    #[test]
    fn context_is_strictly_causal() {
        // Perturbing y-hat at position t changes (mu, sigma) only at
        // raster positions after t within the kernel reach.
        let p = ModelParams::init(1, 2, 1, 7).unwrap();
        let h = 8;
        let w = 8;
        let base = FeatureTensor::from_vec(
            1,
            h,
            w,
            (0..h * w).map(|i| ((i * 13) % 7) as f64 - 3.0).collect(),
        )
        .unwrap();
        let z_hat = FeatureTensor::zeros(2, 2, 2);
        let gp0 = p.entropy_parameters(&z_hat, &base).unwrap();
        let t = (3, 4); // (row, col)
        let mut pert = base.clone();
        pert.set(0, t.0, t.1, pert.get(0, t.0, t.1) + 10.0);
        let gp1 = p.entropy_parameters(&z_hat, &pert).unwrap();
        for py in 0..h {
            for px in 0..w {
                let changed = gp0.mu.get(0, py, px) != gp1.mu.get(0, py, px)
                    || gp0.sigma.get(0, py, px) != gp1.sigma.get(0, py, px);
                let after = (py, px) > t;
                let reach = py as isize - t.0 as isize <= 2
                    && (px as isize - t.1 as isize).abs() <= 2;
                if changed {
                    assert!(after && reach, "non-causal change at ({py},{px})");
                }
                if (py, px) <= t {
                    assert!(!changed, "causality violated at ({py},{px})");
                }
            }
        }
    }

    #[test]
    fn prior_cdf_monotone() {
        let prior = FactorizedPrior::standard(3);
        let mut prev = 0.0;
        for i in -20..=20 {
            let v = prior.cdf(1, f64::from(i) * 0.5);
            assert!(v >= prev);
            prev = v;
        }
        assert!(prior.interval_mass(0, 0.0) > 0.2);
    }
}
