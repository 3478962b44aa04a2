//! Quality and rate metrics: PSNR, multi-scale SSIM, bits-per-pixel, RD
//! curves, and Bjontegaard rate deltas.

use crate::camera::CameraSpec;
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use std::path::Path;

/// Peak signal-to-noise ratio in dB over all RGB samples jointly
/// (peak 255). Identical images report `f64::INFINITY`.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

const MSSSIM_SCALES: usize = 5;
const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Multi-scale SSIM on BT.601 luma: five dyadic scales, contrast-structure
/// terms at every scale, the luminance term only at the coarsest, with the
/// canonical exponents. Negative contrast terms clamp to zero so the
/// fractional powers stay real.
pub fn ms_ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::input("ms_ssim: image dimensions differ"));
    }
    let min_dim = a.width.min(a.height);
    if min_dim < 176 {
        return Err(Error::input(format!(
            "ms_ssim: minimum dimension {min_dim} < 176 (five dyadic scales of an 11-tap window)"
        )));
    }
    let mut pa = luma(a);
    let mut pb = luma(b);
    let mut result = 1.0;
    for scale in 0..MSSSIM_SCALES {
        let (mssim, mcs) = ssim_and_cs(&pa, &pb);
        let term = if scale + 1 == MSSSIM_SCALES { mssim } else { mcs };
        result *= term.max(0.0).powf(MSSSIM_WEIGHTS[scale]);
        if scale + 1 < MSSSIM_SCALES {
            pa = downsample2(&pa);
            pb = downsample2(&pb);
        }
    }
    Ok(result)
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

fn luma(img: &RasterImage) -> Plane {
    let w = img.width as usize;
    let h = img.height as usize;
    let mut data = Vec::with_capacity(w * h);
    for px in img.as_bytes().chunks_exact(3) {
        data.push(0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]));
    }
    Plane { w, h, data }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian filter.
fn gauss_filter(p: &Plane, k: &[f64; SSIM_WINDOW]) -> Plane {
    let ow = p.w - SSIM_WINDOW + 1;
    let oh = p.h - SSIM_WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.data[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * row[x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    Plane { w: ow, h: oh, data: out }
}

fn ssim_and_cs(a: &Plane, b: &Plane) -> (f64, f64) {
    let k = gaussian_kernel();
    let prod = |x: &Plane, y: &Plane| Plane {
        w: x.w,
        h: x.h,
        data: x.data.iter().zip(&y.data).map(|(u, v)| u * v).collect(),
    };
    let mu_a = gauss_filter(a, &k);
    let mu_b = gauss_filter(b, &k);
    let e_aa = gauss_filter(&prod(a, a), &k);
    let e_bb = gauss_filter(&prod(b, b), &k);
    let e_ab = gauss_filter(&prod(a, b), &k);
    let n = mu_a.data.len();
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..n {
        let ma = mu_a.data[i];
        let mb = mu_b.data[i];
        let va = e_aa.data[i] - ma * ma;
        let vb = e_bb.data[i] - mb * mb;
        let cov = e_ab.data[i] - ma * mb;
        let cs = (2.0 * cov + SSIM_C2) / (va + vb + SSIM_C2);
        let l = (2.0 * ma * mb + SSIM_C1) / (ma * ma + mb * mb + SSIM_C1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    (ssim_sum / n as f64, cs_sum / n as f64)
}

/// 2x2 mean pooling with floor division of the dimensions.
fn downsample2(p: &Plane) -> Plane {
    let ow = p.w / 2;
    let oh = p.h / 2;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * p.w + 2 * x;
            out[y * ow + x] = 0.25 * (p.data[i] + p.data[i + 1] + p.data[i + p.w] + p.data[i + p.w + 1]);
        }
    }
    Plane { w: ow, h: oh, data: out }
}

/// Bits per pixel against the ORIGINAL sensor resolution, regardless of
/// what was actually encoded.
pub fn bpp(bit_count: u64, spec: &CameraSpec) -> f64 {
    bit_count as f64 / (f64::from(spec.sensor_width) * f64::from(spec.sensor_height))
}

/// One operating point of a codec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
}

/// A labeled rate-distortion curve, bpp strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, points: Vec<RdPoint>) -> Result<Self> {
        let curve = RdCurve { label: label.into(), points };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.bpp > 0.0) {
                return Err(Error::input("RdCurve: bpp must be > 0"));
            }
            if !(0.0..=1.0).contains(&p.ms_ssim) {
                return Err(Error::input("RdCurve: ms_ssim must be in [0, 1]"));
            }
        }
        for w in self.points.windows(2) {
            if w[1].bpp <= w[0].bpp {
                return Err(Error::input("RdCurve: bpp must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// True when some quality value decreases as bpp grows (reported as a
    /// warning by callers, not an error).
    pub fn quality_nonmonotonic(&self) -> bool {
        self.points
            .windows(2)
            .any(|w| w[1].psnr < w[0].psnr || w[1].ms_ssim < w[0].ms_ssim)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,bpp,psnr,ms_ssim\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", self.label, p.bpp, p.psnr, p.ms_ssim));
        }
        s
    }

    /// Parse every curve in a CSV file, grouped by label in first-seen order.
    pub fn read_csv(text: &str) -> Result<Vec<RdCurve>> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: std::collections::BTreeMap<String, Vec<RdPoint>> = Default::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("label,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::input(format!("csv line {}: expected 4 fields", n + 1)));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::input(format!("csv line {}: bad {what} '{s}'", n + 1)))
            };
            let label = fields[0].to_string();
            let point = RdPoint {
                bpp: parse(fields[1], "bpp")?,
                psnr: parse(fields[2], "psnr")?,
                ms_ssim: parse(fields[3], "ms_ssim")?,
            };
            if !groups.contains_key(&label) {
                order.push(label.clone());
            }
            groups.entry(label).or_default().push(point);
        }
        order
            .into_iter()
            .map(|label| {
                let points = groups.remove(&label).unwrap();
                RdCurve::new(label, points)
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Vec<RdCurve>> {
        RdCurve::read_csv(&std::fs::read_to_string(path)?)
    }
}

/// Which quality axis the BD integration runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityAxis {
    Psnr,
    MsSsim,
}

impl std::str::FromStr for QualityAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "psnr" => Ok(QualityAxis::Psnr),
            "ms_ssim" | "msssim" => Ok(QualityAxis::MsSsim),
            other => Err(format!("unknown quality axis '{other}' (psnr|ms_ssim)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdResult {
    /// Average bitrate difference of test vs reference in percent;
    /// negative means the test curve saves rate.
    pub percent: f64,
    pub warnings: Vec<String>,
}

/// Bjontegaard rate delta: cubic least-squares fits of log10(rate) as a
/// function of quality for both curves, integrated over the shared quality
/// range; the mean log-rate gap maps to a percentage.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve, axis: QualityAxis) -> Result<BdResult> {
    let mut warnings = Vec::new();
    let extract = |curve: &RdCurve, warnings: &mut Vec<String>| -> Result<(Vec<f64>, Vec<f64>)> {
        curve.validate()?;
        if curve.quality_nonmonotonic() {
            warnings.push(format!("curve '{}': quality not monotonic in rate", curve.label));
        }
        let mut q = Vec::new();
        let mut r = Vec::new();
        for p in &curve.points {
            let quality = match axis {
                QualityAxis::Psnr => p.psnr,
                QualityAxis::MsSsim => p.ms_ssim,
            };
            if !quality.is_finite() {
                warnings.push(format!(
                    "curve '{}': dropping non-finite quality point at bpp {}",
                    curve.label, p.bpp
                ));
                continue;
            }
            q.push(quality);
            r.push(p.bpp.log10());
        }
        if q.len() < 4 {
            return Err(Error::input(format!(
                "curve '{}': need at least 4 finite points for a cubic fit",
                curve.label
            )));
        }
        Ok((q, r))
    };

    let (q_ref, r_ref) = extract(reference, &mut warnings)?;
    let (q_test, r_test) = extract(test, &mut warnings)?;

    let lo = min_of(&q_ref).max(min_of(&q_test));
    let hi = max_of(&q_ref).min(max_of(&q_test));
    if !(hi > lo) {
        return Err(Error::input("bd_rate: quality ranges do not overlap"));
    }

    // Center the quality axis for conditioning; the integral is invariant.
    let shift = 0.5 * (lo + hi);
    let fit_ref = cubic_fit(&q_ref, &r_ref, shift)?;
    let fit_test = cubic_fit(&q_test, &r_test, shift)?;

    for (fit, label) in [(&fit_ref, &reference.label), (&fit_test, &test.label)] {
        if derivative_changes_sign(fit, lo - shift, hi - shift) {
            warnings.push(format!("curve '{label}': degenerate (non-monotonic) cubic fit"));
        }
    }

    let span = hi - lo;
    let avg_ref = integrate_cubic(&fit_ref, lo - shift, hi - shift) / span;
    let avg_test = integrate_cubic(&fit_test, lo - shift, hi - shift) / span;
    let delta = avg_test - avg_ref;
    Ok(BdResult {
        percent: (10f64.powf(delta) - 1.0) * 100.0,
        warnings,
    })
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares cubic coefficients (constant first) of r as a function of
/// (q - shift), via the 4x4 normal equations.
fn cubic_fit(q: &[f64], r: &[f64], shift: f64) -> Result<[f64; 4]> {
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for (&qi, &ri) in q.iter().zip(r) {
        let x = qi - shift;
        let basis = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += basis[i] * basis[j];
            }
            atb[i] += basis[i] * ri;
        }
    }
    solve4(ata, atb).ok_or_else(|| Error::input("bd_rate: singular fit (repeated quality values?)"))
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn integrate_cubic(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let f = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 + c[3] * x * x * x * x / 4.0;
    f(hi) - f(lo)
}

fn derivative_changes_sign(c: &[f64; 4], lo: f64, hi: f64) -> bool {
    let d = |x: f64| c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x;
    let steps = 64;
    let first = d(lo);
    (1..=steps).any(|i| {
        let x = lo + (hi - lo) * f64::from(i) / f64::from(steps);
        d(x) * first < 0.0
    })
}
