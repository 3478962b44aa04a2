//! Global attention over pixel-wise feature vectors in the resampling path.
//!
//! The module resamples the input feature map, flattens both maps into
//! per-pixel vectors, and runs two attention stages: queries come from the
//! resampled map (stage one) and from the first stage's output (stage
//! two); keys and values always come from the unsampled map. Each stage
//! adds its query input back (skip), and the resampled vectors are added
//! once more before reshaping, so a zeroed value path reduces the module
//! to exactly twice the resampler output.

use super::blocks::RbnBlock;
use super::layers::{subpixel_backward, subpixel_upsample, Conv2d};
use super::tensor::FeatureTensor;
use crate::detmath::det_exp;
use crate::error::{Error, Result};

/// Largest H*W the attention input may have; the score matrix is
/// O((H*W)^2) and must stay bounded.
pub const ATTENTION_HW_BUDGET: usize = 9216;

/// Row-major dense matrix, just big enough for the attention math.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn add(&self, o: &Mat) -> Mat {
        debug_assert!(self.rows == o.rows && self.cols == o.cols);
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// self (r x k) * other (k x c).
    pub fn matmul(&self, o: &Mat) -> Mat {
        debug_assert_eq!(self.cols, o.rows);
        let mut out = Mat::zeros(self.rows, o.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == 0.0 {
                    continue;
                }
                let orow = &o.data[k * o.cols..(k + 1) * o.cols];
                let out_row = &mut out.data[r * o.cols..(r + 1) * o.cols];
                for (ov, &b) in out_row.iter_mut().zip(orow) {
                    *ov += a * b;
                }
            }
        }
        out
    }

    /// self (r x k) * other^T where other is (c x k).
    pub fn matmul_nt(&self, o: &Mat) -> Mat {
        debug_assert_eq!(self.cols, o.cols);
        let mut out = Mat::zeros(self.rows, o.rows);
        for r in 0..self.rows {
            let arow = &self.data[r * self.cols..(r + 1) * self.cols];
            for c in 0..o.rows {
                let brow = &o.data[c * o.cols..(c + 1) * o.cols];
                let mut acc = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                *out.at_mut(r, c) = acc;
            }
        }
        out
    }

    /// self^T * other: self is (k x r), other (k x c).
    pub fn matmul_tn(&self, o: &Mat) -> Mat {
        debug_assert_eq!(self.rows, o.rows);
        let mut out = Mat::zeros(self.cols, o.cols);
        for k in 0..self.rows {
            for r in 0..self.cols {
                let a = self.at(k, r);
                if a == 0.0 {
                    continue;
                }
                let orow = &o.data[k * o.cols..(k + 1) * o.cols];
                let out_row = &mut out.data[r * o.cols..(r + 1) * o.cols];
                for (ov, &b) in out_row.iter_mut().zip(orow) {
                    *ov += a * b;
                }
            }
        }
        out
    }

    pub fn col_slice(&self, lo: usize, hi: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, hi - lo);
        for r in 0..self.rows {
            out.data[r * (hi - lo)..(r + 1) * (hi - lo)]
                .copy_from_slice(&self.data[r * self.cols + lo..r * self.cols + hi]);
        }
        out
    }

    pub fn add_col_slice(&mut self, lo: usize, part: &Mat) {
        for r in 0..self.rows {
            for c in 0..part.cols {
                *self.at_mut(r, lo + c) += part.at(r, c);
            }
        }
    }
}

/// Row-wise softmax with max subtraction, evaluated with the deterministic
/// exponential so scores are platform-stable.
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = det_exp(*v - m);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// d(loss)/d(logits) given softmax output `s` and upstream gradient `gs`.
fn softmax_rows_backward(s: &Mat, gs: &Mat) -> Mat {
    let mut out = Mat::zeros(s.rows, s.cols);
    for r in 0..s.rows {
        let srow = &s.data[r * s.cols..(r + 1) * s.cols];
        let grow = &gs.data[r * s.cols..(r + 1) * s.cols];
        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
        let orow = &mut out.data[r * s.cols..(r + 1) * s.cols];
        for ((o, &sv), &gv) in orow.iter_mut().zip(srow).zip(grow) {
            *o = sv * (gv - dot);
        }
    }
    out
}

/// Fully connected layer on row vectors: out = x * W^T + b,
/// W is (out_dim x in_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Linear {
        let mut l = Linear::new(dim, dim);
        for i in 0..dim {
            l.weights[i * dim + i] = 1.0;
        }
        l
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols, self.in_dim);
        let mut out = Mat::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let xrow = &x.data[r * x.cols..(r + 1) * x.cols];
            let orow = &mut out.data[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, ov) in orow.iter_mut().enumerate() {
                let wrow = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias[o];
                for (a, w) in xrow.iter().zip(wrow) {
                    acc += a * w;
                }
                *ov = acc;
            }
        }
        out
    }

    pub fn backward(&self, x: &Mat, gy: &Mat) -> (Mat, Vec<f64>, Vec<f64>) {
        let mut gx = Mat::zeros(x.rows, self.in_dim);
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        for r in 0..x.rows {
            let xrow = &x.data[r * x.cols..(r + 1) * x.cols];
            let grow = &gy.data[r * self.out_dim..(r + 1) * self.out_dim];
            let gxrow = &mut gx.data[r * self.in_dim..(r + 1) * self.in_dim];
            for (o, &g) in grow.iter().enumerate() {
                gb[o] += g;
                let wrow = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let gwrow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    gwrow[i] += g * xrow[i];
                    gxrow[i] += g * wrow[i];
                }
            }
        }
        (gx, gw, gb)
    }
}

/// The resampling component wrapped by the attention module.
#[derive(Debug, Clone, PartialEq)]
pub enum Resampler {
    /// Plain stride-2 convolution (3x3).
    ConvStride2(Conv2d),
    /// Plain subpixel upsampler: 3x3 conv to 4x channels + depth-to-space.
    SubpixelConv(Conv2d),
    /// Residual bottleneck downsampler.
    Rbnd(RbnBlock),
    /// Residual bottleneck upsampler.
    Rbnu(RbnBlock),
}

impl Resampler {
    pub fn forward(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        match self {
            Resampler::ConvStride2(c) => c.forward(x),
            Resampler::SubpixelConv(c) => subpixel_upsample(&c.forward(x)?),
            Resampler::Rbnd(b) | Resampler::Rbnu(b) => b.forward(x),
        }
    }

    pub fn backward(&self, x: &FeatureTensor, gy: &FeatureTensor) -> Result<(FeatureTensor, Vec<Vec<f64>>)> {
        match self {
            Resampler::ConvStride2(c) => {
                let (gx, gw, gb) = c.backward(x, gy)?;
                Ok((gx, vec![gw, gb]))
            }
            Resampler::SubpixelConv(c) => {
                let gpre = subpixel_backward(gy)?;
                let (gx, gw, gb) = c.backward(x, &gpre)?;
                Ok((gx, vec![gw, gb]))
            }
            Resampler::Rbnd(b) | Resampler::Rbnu(b) => b.backward(x, gy),
        }
    }

    pub fn param_arrays(&self) -> Vec<(String, &Vec<f64>)> {
        match self {
            Resampler::ConvStride2(c) | Resampler::SubpixelConv(c) => vec![
                ("conv.w".to_string(), &c.weights),
                ("conv.b".to_string(), &c.bias),
            ],
            Resampler::Rbnd(b) | Resampler::Rbnu(b) => b
                .param_arrays()
                .into_iter()
                .map(|(n, d)| (n.to_string(), d))
                .collect(),
        }
    }

    pub fn param_arrays_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        match self {
            Resampler::ConvStride2(c) | Resampler::SubpixelConv(c) => vec![
                ("conv.w".to_string(), &mut c.weights),
                ("conv.b".to_string(), &mut c.bias),
            ],
            Resampler::Rbnd(b) | Resampler::Rbnu(b) => b
                .param_arrays_mut()
                .into_iter()
                .map(|(n, d)| (n.to_string(), d))
                .collect(),
        }
    }
}

/// One attention stage: query/key/value linear maps plus the two
/// post-attention projections, with a skip from the query input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStage {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub proj1: Linear,
    pub proj2: Linear,
}

impl AttentionStage {
    pub fn identity(dim: usize) -> AttentionStage {
        AttentionStage {
            wq: Linear::identity(dim),
            wk: Linear::identity(dim),
            wv: Linear::identity(dim),
            proj1: Linear::identity(dim),
            proj2: Linear::identity(dim),
        }
    }

    pub fn param_arrays(&self) -> Vec<(String, &Vec<f64>)> {
        vec![
            ("wq.w".into(), &self.wq.weights),
            ("wq.b".into(), &self.wq.bias),
            ("wk.w".into(), &self.wk.weights),
            ("wk.b".into(), &self.wk.bias),
            ("wv.w".into(), &self.wv.weights),
            ("wv.b".into(), &self.wv.bias),
            ("proj1.w".into(), &self.proj1.weights),
            ("proj1.b".into(), &self.proj1.bias),
            ("proj2.w".into(), &self.proj2.weights),
            ("proj2.b".into(), &self.proj2.bias),
        ]
    }

    pub fn param_arrays_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        vec![
            ("wq.w".into(), &mut self.wq.weights),
            ("wq.b".into(), &mut self.wq.bias),
            ("wk.w".into(), &mut self.wk.weights),
            ("wk.b".into(), &mut self.wk.bias),
            ("wv.w".into(), &mut self.wv.weights),
            ("wv.b".into(), &mut self.wv.bias),
            ("proj1.w".into(), &mut self.proj1.weights),
            ("proj1.b".into(), &mut self.proj1.bias),
            ("proj2.w".into(), &mut self.proj2.weights),
            ("proj2.b".into(), &mut self.proj2.bias),
        ]
    }
}

struct StageTrace {
    q: Mat,
    k: Mat,
    v: Mat,
    attn: Vec<Mat>, // per head softmax outputs
    concat: Mat,
    o1: Mat,
    out: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAttention {
    pub heads: usize,
    pub resampler: Resampler,
    pub stage1: AttentionStage,
    pub stage2: AttentionStage,
}

/// Flatten C x H x W into (H*W) x C pixel vectors (raster order rows).
pub fn to_rows(t: &FeatureTensor) -> Mat {
    let hw = t.height * t.width;
    let mut m = Mat::zeros(hw, t.channels);
    for c in 0..t.channels {
        for p in 0..hw {
            *m.at_mut(p, c) = t.data[c * hw + p];
        }
    }
    m
}

pub fn from_rows(m: &Mat, channels: usize, height: usize, width: usize) -> FeatureTensor {
    debug_assert_eq!(m.cols, channels);
    debug_assert_eq!(m.rows, height * width);
    let hw = height * width;
    let mut t = FeatureTensor::zeros(channels, height, width);
    for c in 0..channels {
        for p in 0..hw {
            t.data[c * hw + p] = m.at(p, c);
        }
    }
    t
}

impl GlobalAttention {
    /// Scale divisor: Eq-style sqrt(C) for a single head, sqrt(C/heads)
    /// per head otherwise.
    fn denom(&self, channels: usize) -> f64 {
        if self.heads == 1 {
            (channels as f64).sqrt()
        } else {
            (channels as f64 / self.heads as f64).sqrt()
        }
    }

    fn check(&self, f: &FeatureTensor) -> Result<()> {
        if f.height * f.width > ATTENTION_HW_BUDGET {
            return Err(Error::input(format!(
                "attention input {}x{} exceeds the H*W budget {}",
                f.height, f.width, ATTENTION_HW_BUDGET
            )));
        }
        if f.channels % self.heads != 0 {
            return Err(Error::input(format!(
                "channels {} not divisible by heads {}",
                f.channels, self.heads
            )));
        }
        Ok(())
    }

    fn stage_forward(&self, st: &AttentionStage, xq: &Mat, fr: &Mat, channels: usize) -> StageTrace {
        let q = st.wq.forward(xq);
        let k = st.wk.forward(fr);
        let v = st.wv.forward(fr);
        let dh = channels / self.heads;
        let denom = self.denom(channels);
        let mut concat = Mat::zeros(xq.rows, channels);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.col_slice(h * dh, (h + 1) * dh);
            let kh = k.col_slice(h * dh, (h + 1) * dh);
            let vh = v.col_slice(h * dh, (h + 1) * dh);
            let mut logits = qh.matmul_nt(&kh);
            for l in logits.data.iter_mut() {
                *l /= denom;
            }
            let a = softmax_rows(&logits);
            let oh = a.matmul(&vh);
            concat.add_col_slice(h * dh, &oh);
            attn.push(a);
        }
        let o1 = st.proj1.forward(&concat);
        let o2 = st.proj2.forward(&o1);
        let out = o2.add(xq);
        StageTrace { q, k, v, attn, concat, o1, out }
    }

    #[allow(clippy::type_complexity)]
    fn stage_backward(
        &self,
        st: &AttentionStage,
        tr: &StageTrace,
        xq: &Mat,
        fr: &Mat,
        gy: &Mat,
        channels: usize,
    ) -> (Mat, Mat, Vec<Vec<f64>>) {
        let dh = channels / self.heads;
        let denom = self.denom(channels);
        let (go1, gp2w, gp2b) = st.proj2.backward(&tr.o1, gy);
        let (gconcat, gp1w, gp1b) = st.proj1.backward(&tr.concat, &go1);
        let mut gq = Mat::zeros(tr.q.rows, channels);
        let mut gk = Mat::zeros(tr.k.rows, channels);
        let mut gv = Mat::zeros(tr.v.rows, channels);
        for h in 0..self.heads {
            let goh = gconcat.col_slice(h * dh, (h + 1) * dh);
            let qh = tr.q.col_slice(h * dh, (h + 1) * dh);
            let kh = tr.k.col_slice(h * dh, (h + 1) * dh);
            let vh = tr.v.col_slice(h * dh, (h + 1) * dh);
            let a = &tr.attn[h];
            let ga = goh.matmul_nt(&vh);
            let gvh = a.matmul_tn(&goh);
            let mut glogits = softmax_rows_backward(a, &ga);
            for l in glogits.data.iter_mut() {
                *l /= denom;
            }
            let gqh = glogits.matmul(&kh);
            let gkh = glogits.matmul_tn(&qh);
            gq.add_col_slice(h * dh, &gqh);
            gk.add_col_slice(h * dh, &gkh);
            gv.add_col_slice(h * dh, &gvh);
        }
        let (gxq_attn, gwqw, gwqb) = st.wq.backward(xq, &gq);
        let (gfr_k, gwkw, gwkb) = st.wk.backward(fr, &gk);
        let (gfr_v, gwvw, gwvb) = st.wv.backward(fr, &gv);
        let gxq = gxq_attn.add(gy); // skip path
        let gfr = gfr_k.add(&gfr_v);
        (
            gxq,
            gfr,
            vec![gwqw, gwqb, gwkw, gwkb, gwvw, gwvb, gp1w, gp1b, gp2w, gp2b],
        )
    }

    pub fn forward(&self, f: &FeatureTensor) -> Result<FeatureTensor> {
        self.check(f)?;
        let fd = self.resampler.forward(f)?;
        let fr = to_rows(f);
        let fdr = to_rows(&fd);
        let s1 = self.stage_forward(&self.stage1, &fdr, &fr, f.channels);
        let s2 = self.stage_forward(&self.stage2, &s1.out, &fr, f.channels);
        let out = s2.out.add(&fdr);
        Ok(from_rows(&out, fd.channels, fd.height, fd.width))
    }

    /// Softmax attention rows of both stages for a given input; every row
    /// sums to 1 (verification surface).
    pub fn attention_row_sums(&self, f: &FeatureTensor) -> Result<Vec<f64>> {
        self.check(f)?;
        let fd = self.resampler.forward(f)?;
        let fr = to_rows(f);
        let fdr = to_rows(&fd);
        let s1 = self.stage_forward(&self.stage1, &fdr, &fr, f.channels);
        let s2 = self.stage_forward(&self.stage2, &s1.out, &fr, f.channels);
        let mut sums = Vec::new();
        for tr in [&s1, &s2] {
            for a in &tr.attn {
                for r in 0..a.rows {
                    sums.push(a.data[r * a.cols..(r + 1) * a.cols].iter().sum());
                }
            }
        }
        Ok(sums)
    }

    /// Gradients with respect to the input and all parameters
    /// (resampler params, stage1, stage2 in `param_arrays` order).
    pub fn backward(&self, f: &FeatureTensor, gy: &FeatureTensor) -> Result<(FeatureTensor, Vec<Vec<f64>>)> {
        self.check(f)?;
        let fd = self.resampler.forward(f)?;
        let fr = to_rows(f);
        let fdr = to_rows(&fd);
        let s1 = self.stage_forward(&self.stage1, &fdr, &fr, f.channels);
        let s2 = self.stage_forward(&self.stage2, &s1.out, &fr, f.channels);

        let gout = to_rows(gy);
        // out = s2.out + fdr
        let (gs1_out, gfr2, st2_grads) = self.stage_backward(&self.stage2, &s2, &s1.out, &fr, &gout, f.channels);
        let (gfdr_1, gfr1, st1_grads) = self.stage_backward(&self.stage1, &s1, &fdr, &fr, &gs1_out, f.channels);
        let gfdr = gfdr_1.add(&gout);
        let gfd = from_rows(&gfdr, fd.channels, fd.height, fd.width);
        let (gf_res, res_grads) = self.resampler.backward(f, &gfd)?;
        let gfr_total = gfr1.add(&gfr2);
        let gf_attn = from_rows(&gfr_total, f.channels, f.height, f.width);
        let gf = gf_res.add(&gf_attn);

        let mut grads = res_grads;
        grads.extend(st1_grads);
        grads.extend(st2_grads);
        Ok((gf, grads))
    }

    pub fn param_arrays(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (n, d) in self.resampler.param_arrays() {
            out.push((format!("resampler.{n}"), d));
        }
        for (n, d) in self.stage1.param_arrays() {
            out.push((format!("stage1.{n}"), d));
        }
        for (n, d) in self.stage2.param_arrays() {
            out.push((format!("stage2.{n}"), d));
        }
        out
    }

    pub fn param_arrays_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (n, d) in self.resampler.param_arrays_mut() {
            out.push((format!("resampler.{n}"), d));
        }
        for (n, d) in self.stage1.param_arrays_mut() {
            out.push((format!("stage1.{n}"), d));
        }
        for (n, d) in self.stage2.param_arrays_mut() {
            out.push((format!("stage2.{n}"), d));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_attention(dim: usize, heads: usize) -> GlobalAttention {
        // Resampler: stride-2 conv picking the top-left sample of each
        // 2x2 block (1x1 kernel identity, stride 2).
        let mut conv = Conv2d::new(dim, dim, 1, 2);
        for c in 0..dim {
            conv.weights[c * dim + c] = 1.0;
        }
        GlobalAttention {
            heads,
            resampler: Resampler::ConvStride2(conv),
            stage1: AttentionStage::identity(dim),
            stage2: AttentionStage::identity(dim),
        }
    }

    #[test]
    fn constant_input_hand_computation() {
        // C=1, H=W=2, identity linears, constant input c:
        // f_dr = [c]; stage1: softmax uniform over 4 keys -> attn out = c,
        // f_d1 = c + c = 2c; stage2: attn out = c, f_d2 = c + 2c = 3c;
        // output = f_d2 + f_dr = 4c.
        let ga = identity_attention(1, 1);
        let c = 0.7;
        let f = FeatureTensor::from_vec(1, 2, 2, vec![c; 4]).unwrap();
        let out = ga.forward(&f).unwrap();
        assert_eq!(out.shape(), (1, 1, 1));
        assert!((out.data[0] - 4.0 * c).abs() < 1e-10, "{}", out.data[0]);
    }

    #[test]
    fn zero_value_path_doubles_resampler_output() {
        for heads in [1, 2] {
            let mut ga = identity_attention(4, heads);
            ga.stage1.wv = Linear::new(4, 4);
            ga.stage2.wv = Linear::new(4, 4);
            let f = FeatureTensor::from_vec(
                4,
                2,
                2,
                (0..16).map(|i| (i as f64) * 0.17 - 1.0).collect(),
            )
            .unwrap();
            let fd = ga.resampler.forward(&f).unwrap();
            let out = ga.forward(&f).unwrap();
            for (o, d) in out.data.iter().zip(&fd.data) {
                assert!((o - 2.0 * d).abs() < 1e-12, "heads {heads}");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let ga = identity_attention(2, 2);
        let f = FeatureTensor::from_vec(2, 2, 2, (0..8).map(|i| (i as f64) * 1.3 - 4.0).collect()).unwrap();
        let sums = ga.attention_row_sums(&f).unwrap();
        assert!(!sums.is_empty());
        for s in sums {
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_and_head_checks() {
        let ga = identity_attention(3, 2); // 3 % 2 != 0
        let f = FeatureTensor::zeros(3, 2, 2);
        assert!(ga.forward(&f).is_err());
        let ga = identity_attention(1, 1);
        let f = FeatureTensor::zeros(1, 97, 97); // 9409 > 9216
        assert!(ga.forward(&f).is_err());
    }

    #[test]
    fn rows_roundtrip() {
        let t = FeatureTensor::from_vec(3, 2, 4, (0..24).map(|i| i as f64).collect()).unwrap();
        let m = to_rows(&t);
        let back = from_rows(&m, 3, 2, 4);
        assert_eq!(t, back);
    }
}
