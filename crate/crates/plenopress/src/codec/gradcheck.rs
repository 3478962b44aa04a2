//! Analytic-vs-finite-difference gradient verification for the layers
//! whose backward passes are hand-derived.
//!
//! Each target packs its input and parameters into one flat vector; the
//! harness compares reverse-mode gradients against central differences at
//! randomly probed coordinates and reports the worst relative error.

use super::attention::{AttentionStage, GlobalAttention, Linear, Resampler};
use super::layers::{Conv2d, Gdn};
use super::tensor::FeatureTensor;
use crate::detmath::{det_normal_cdf, det_normal_pdf};
use crate::error::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which computation to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Gdn,
    GlobalAttention,
    RdLossToyModel,
}

impl std::str::FromStr for GradTarget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gdn" => Ok(GradTarget::Gdn),
            "attention" | "global_attention" => Ok(GradTarget::GlobalAttention),
            "rd_loss" | "toy" => Ok(GradTarget::RdLossToyModel),
            other => Err(format!("unknown grad target '{other}' (gdn|attention|rd_loss)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckResult {
    pub max_rel_err: f64,
    pub probes: usize,
}

const FD_STEP: f64 = 1e-5;

/// Central-difference comparison over `probes` coordinates of the flat
/// input+parameter vector.
fn run_check(
    x0: &[f64],
    eval: &dyn Fn(&[f64]) -> f64,
    analytic: &dyn Fn(&[f64]) -> Vec<f64>,
    probes: usize,
    seed: u64,
) -> GradCheckResult {
    let g = analytic(x0);
    assert_eq!(g.len(), x0.len());
    assert!(g.iter().all(|v| v.is_finite()), "non-finite analytic gradient");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = (0..x0.len()).collect();
    coords.shuffle(&mut rng);
    let picked: Vec<usize> = if probes >= coords.len() {
        coords
    } else {
        coords.into_iter().take(probes).collect()
    };
    let mut work = x0.to_vec();
    let mut max_rel = 0.0f64;
    for &i in &picked {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let fp = eval(&work);
        work[i] = orig - FD_STEP;
        let fm = eval(&work);
        work[i] = orig;
        let fd = (fp - fm) / (2.0 * FD_STEP);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    GradCheckResult { max_rel_err: max_rel, probes: picked.len() }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Verify a target; returns the max relative gradient error.
pub fn grad_check(target: GradTarget, probe_count: usize, seed: u64) -> Result<GradCheckResult> {
    match target {
        GradTarget::Gdn => Ok(check_gdn(probe_count, seed)),
        GradTarget::GlobalAttention => Ok(check_attention(probe_count, seed)),
        GradTarget::RdLossToyModel => Ok(check_toy_rd(probe_count, seed)),
    }
}

// --- GDN ---

fn check_gdn(probes: usize, seed: u64) -> GradCheckResult {
    let c = 4;
    let h = 4;
    let w = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::new();
    for _ in 0..c * h * w {
        flat.push(uniform(&mut rng, -1.5, 1.5));
    }
    for _ in 0..c {
        flat.push(uniform(&mut rng, 0.5, 1.5)); // beta
    }
    for _ in 0..c * c {
        flat.push(uniform(&mut rng, 0.01, 0.2)); // gamma
    }
    let unpack = move |flat: &[f64]| -> (FeatureTensor, Gdn) {
        let x = FeatureTensor::from_vec(c, h, w, flat[..c * h * w].to_vec()).unwrap();
        let gdn = Gdn {
            channels: c,
            beta: flat[c * h * w..c * h * w + c].to_vec(),
            gamma: flat[c * h * w + c..].to_vec(),
            inverse: false,
        };
        (x, gdn)
    };
    let eval = move |flat: &[f64]| -> f64 {
        let (x, gdn) = unpack(flat);
        gdn.forward(&x).unwrap().data.iter().sum()
    };
    let analytic = move |flat: &[f64]| -> Vec<f64> {
        let (x, gdn) = unpack(flat);
        let ones = FeatureTensor::from_vec(c, h, w, vec![1.0; c * h * w]).unwrap();
        let (gx, gbeta, ggamma) = gdn.backward(&x, &ones).unwrap();
        let mut g = gx.data;
        g.extend(gbeta);
        g.extend(ggamma);
        g
    };
    run_check(&flat.clone(), &eval, &analytic, probes, seed ^ 0x5eed)
}

// --- global attention ---

struct AttentionLayout {
    c: usize,
    h: usize,
    w: usize,
    heads: usize,
    sizes: Vec<usize>,
}

fn attention_layout() -> AttentionLayout {
    let c = 4;
    let (h, w) = (4, 4);
    // input, conv w, conv b, then 2 stages x 5 linears x (w, b)
    let mut sizes = vec![c * h * w, c * c * 9, c];
    for _ in 0..2 {
        for _ in 0..5 {
            sizes.push(c * c);
            sizes.push(c);
        }
    }
    AttentionLayout { c, h, w, heads: 1, sizes }
}

fn build_attention(layout: &AttentionLayout, flat: &[f64]) -> (FeatureTensor, GlobalAttention) {
    let mut off = 0;
    let mut take = |len: usize| {
        let s = flat[off..off + len].to_vec();
        off += len;
        s
    };
    let c = layout.c;
    let x = FeatureTensor::from_vec(c, layout.h, layout.w, take(layout.sizes[0])).unwrap();
    let mut conv = Conv2d::new(c, c, 3, 2);
    conv.weights = take(layout.sizes[1]);
    conv.bias = take(layout.sizes[2]);
    let mut stages = Vec::new();
    for _ in 0..2 {
        let mut linears = Vec::new();
        for _ in 0..5 {
            let mut l = Linear::new(c, c);
            l.weights = take(c * c);
            l.bias = take(c);
            linears.push(l);
        }
        let proj2 = linears.pop().unwrap();
        let proj1 = linears.pop().unwrap();
        let wv = linears.pop().unwrap();
        let wk = linears.pop().unwrap();
        let wq = linears.pop().unwrap();
        stages.push(AttentionStage { wq, wk, wv, proj1, proj2 });
    }
    let stage2 = stages.pop().unwrap();
    let stage1 = stages.pop().unwrap();
    let ga = GlobalAttention {
        heads: layout.heads,
        resampler: Resampler::ConvStride2(conv),
        stage1,
        stage2,
    };
    (x, ga)
}

fn check_attention(probes: usize, seed: u64) -> GradCheckResult {
    let layout = attention_layout();
    let total: usize = layout.sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..total).map(|_| uniform(&mut rng, -0.6, 0.6)).collect();
    let eval = {
        let layout = attention_layout();
        move |flat: &[f64]| -> f64 {
            let (x, ga) = build_attention(&layout, flat);
            ga.forward(&x).unwrap().data.iter().sum()
        }
    };
    let analytic = {
        let layout = attention_layout();
        move |flat: &[f64]| -> Vec<f64> {
            let (x, ga) = build_attention(&layout, flat);
            let fd = ga.resampler.forward(&x).unwrap();
            let ones = FeatureTensor::from_vec(fd.channels, fd.height, fd.width, vec![1.0; fd.len()]).unwrap();
            let (gx, grads) = ga.backward(&x, &ones).unwrap();
            let mut g = gx.data;
            for block in grads {
                g.extend(block);
            }
            g
        }
    };
    run_check(&flat, &eval, &analytic, probes, seed ^ 0xa77e)
}

// --- rate-distortion loss through a toy codec ---

struct ToyRd {
    x: FeatureTensor,
    enc: Conv2d,
    gdn: Gdn,
    igdn: Gdn,
    dec: Conv2d,
}

const TOY_LAMBDA: f64 = 0.01;

fn toy_sizes() -> Vec<usize> {
    // x(1x4x4), enc w/b (2ch), gdn beta/gamma, igdn beta/gamma, dec w/b
    vec![16, 2 * 9, 2, 2, 4, 2, 4, 1 * 2 * 9, 1]
}

fn build_toy(flat: &[f64]) -> ToyRd {
    let mut off = 0;
    let mut take = |len: usize| {
        let s = flat[off..off + len].to_vec();
        off += len;
        s
    };
    let x = FeatureTensor::from_vec(1, 4, 4, take(16)).unwrap();
    let mut enc = Conv2d::new(1, 2, 3, 1);
    enc.weights = take(18);
    enc.bias = take(2);
    let gdn = Gdn { channels: 2, beta: take(2), gamma: take(4), inverse: false };
    let igdn = Gdn { channels: 2, beta: take(2), gamma: take(4), inverse: true };
    let mut dec = Conv2d::new(2, 1, 3, 1);
    dec.weights = take(18);
    dec.bias = take(1);
    ToyRd { x, enc, gdn, igdn, dec }
}

/// Continuous Gaussian interval rate of one latent under N(0, 1).
fn toy_rate_and_grad(y: &FeatureTensor) -> (f64, FeatureTensor) {
    let ln2 = std::f64::consts::LN_2;
    let mut bits = 0.0;
    let mut grad = FeatureTensor::zeros(y.channels, y.height, y.width);
    for (i, &v) in y.data.iter().enumerate() {
        let p = (det_normal_cdf(v + 0.5) - det_normal_cdf(v - 0.5)).max(super::rate::PROB_FLOOR);
        bits += -p.log2();
        if p > super::rate::PROB_FLOOR {
            let dp = det_normal_pdf(v + 0.5) - det_normal_pdf(v - 0.5);
            grad.data[i] = -dp / (p * ln2);
        }
    }
    (bits, grad)
}

fn toy_loss(model: &ToyRd) -> f64 {
    let y = model.gdn.forward(&model.enc.forward(&model.x).unwrap()).unwrap();
    let (bits, _) = toy_rate_and_grad(&y);
    let xh = model.dec.forward(&model.igdn.forward(&y).unwrap()).unwrap();
    let n = model.x.len() as f64;
    bits / n + TOY_LAMBDA * 255.0 * 255.0 * model.x.mse(&xh).unwrap()
}

fn toy_grad(model: &ToyRd) -> Vec<f64> {
    let n = model.x.len() as f64;
    let enc_out = model.enc.forward(&model.x).unwrap();
    let y = model.gdn.forward(&enc_out).unwrap();
    let igdn_out = model.igdn.forward(&y).unwrap();
    let xh = model.dec.forward(&igdn_out).unwrap();

    // distortion: lambda*255^2 * mean((x - xh)^2)
    let dscale = TOY_LAMBDA * 255.0 * 255.0 * 2.0 / n;
    let mut g_xh = FeatureTensor::zeros(xh.channels, xh.height, xh.width);
    let mut g_x_direct = FeatureTensor::zeros(1, 4, 4);
    for i in 0..xh.data.len() {
        let diff = model.x.data[i] - xh.data[i];
        g_xh.data[i] = -dscale * diff;
        g_x_direct.data[i] = dscale * diff;
    }
    let (g_igdn_out, g_dec_w, g_dec_b) = model.dec.backward(&igdn_out, &g_xh).unwrap();
    let (gy_dec, g_igdn_beta, g_igdn_gamma) = model.igdn.backward(&y, &g_igdn_out).unwrap();
    let (_, rate_grad) = toy_rate_and_grad(&y);
    let gy_total = gy_dec.add(&rate_grad.map(|v| v / n));
    let (g_enc_out, g_gdn_beta, g_gdn_gamma) = model.gdn.backward(&enc_out, &gy_total).unwrap();
    let (gx_enc, g_enc_w, g_enc_b) = model.enc.backward(&model.x, &g_enc_out).unwrap();
    let gx = gx_enc.add(&g_x_direct);

    let mut g = gx.data;
    g.extend(g_enc_w);
    g.extend(g_enc_b);
    g.extend(g_gdn_beta);
    g.extend(g_gdn_gamma);
    g.extend(g_igdn_beta);
    g.extend(g_igdn_gamma);
    g.extend(g_dec_w);
    g.extend(g_dec_b);
    g
}

fn check_toy_rd(probes: usize, seed: u64) -> GradCheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = toy_sizes();
    let mut flat = Vec::new();
    for (block, &len) in sizes.iter().enumerate() {
        for _ in 0..len {
            let v = match block {
                0 => uniform(&mut rng, 0.0, 1.0),       // image in [0,1]
                3 | 5 => uniform(&mut rng, 0.6, 1.4),   // betas
                4 | 6 => uniform(&mut rng, 0.01, 0.15), // gammas
                _ => uniform(&mut rng, -0.5, 0.5),      // conv weights/biases
            };
            flat.push(v);
        }
    }
    let eval = |flat: &[f64]| -> f64 { toy_loss(&build_toy(flat)) };
    let analytic = |flat: &[f64]| -> Vec<f64> { toy_grad(&build_toy(flat)) };
    run_check(&flat, &eval, &analytic, probes, seed ^ 0x70f)
}
