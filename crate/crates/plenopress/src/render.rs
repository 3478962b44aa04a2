//! Sub-aperture view rendering by microimage patch stitching.
//!
//! A view picks one p x p window per microimage, offset from the
//! microimage center by the view index times the view step, and tiles the
//! windows in grid order. No blending or interpolation happens between
//! patches; rendering the same view from the raw sensor image and from
//! the preprocessed layout therefore produces bit-identical pixels as
//! long as every window stays inside the cropped tile.

use crate::camera::{crop_window_origin, CameraSpec};
use crate::error::{Error, Result};
use crate::metrics;
use crate::preprocess::{crop_and_align, PreprocessedImage};
use crate::raster::RasterImage;
use rayon::prelude::*;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// V: views per side, odd so a central view exists.
    pub views_per_side: u32,
    /// p: stitched patch size in pixels.
    pub patch_size: u32,
    /// s: view offset step in pixels per view index.
    pub view_step: u32,
    /// Rotate every patch 180 degrees (relay-imaging inversion).
    pub flip_patches: bool,
    pub target_width: Option<u32>,
    pub target_height: Option<u32>,
    pub resample: Resample,
    /// Allow view windows to read outside their d x d tile (neighbor-tile
    /// pixels, clamped at image borders) instead of erroring. Used to
    /// reproduce the distortion knee when d is too small for the window.
    pub permit_tile_escape: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            views_per_side: 5,
            patch_size: 16,
            view_step: 1,
            flip_patches: false,
            target_width: None,
            target_height: None,
            resample: Resample::Bilinear,
            permit_tile_escape: false,
        }
    }
}

impl RenderConfig {
    /// Total window span: p + (V-1)*s must fit in the crop size d.
    pub fn window_extent(&self) -> u32 {
        self.patch_size + (self.views_per_side - 1) * self.view_step
    }

    fn validate(&self, d: u32) -> Result<()> {
        if self.views_per_side % 2 == 0 {
            return Err(Error::input("views_per_side must be odd"));
        }
        if self.patch_size == 0 {
            return Err(Error::input("patch_size must be >= 1"));
        }
        if !self.permit_tile_escape && self.window_extent() > d {
            return Err(Error::input(format!(
                "render window {} = p + (V-1)*s exceeds crop size {}",
                self.window_extent(),
                d
            )));
        }
        Ok(())
    }
}

/// V x V grid of rendered views, row-major; the central view sits at
/// index (V/2, V/2) (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGrid {
    pub views_per_side: u32,
    views: Vec<RasterImage>,
}

impl ViewGrid {
    pub fn view(&self, i: u32, j: u32) -> &RasterImage {
        &self.views[(i * self.views_per_side + j) as usize]
    }

    pub fn central(&self) -> &RasterImage {
        let c = self.views_per_side / 2;
        self.view(c, c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RasterImage> {
        self.views.iter()
    }

    /// Writes `view_{i}_{j}.png` (1-based indices) plus `index.txt`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for i in 0..self.views_per_side {
            for j in 0..self.views_per_side {
                self.view(i, j)
                    .save(&dir.join(format!("view_{}_{}.png", i + 1, j + 1)))?;
            }
        }
        let first = self.view(0, 0);
        let index = format!(
            "views_per_side = {}\nview_width = {}\nview_height = {}\n",
            self.views_per_side, first.width, first.height
        );
        std::fs::write(dir.join("index.txt"), index)?;
        Ok(())
    }
}

/// Render all V x V views from a preprocessed image.
pub fn render_views(pre: &PreprocessedImage, cfg: &RenderConfig) -> Result<ViewGrid> {
    cfg.validate(pre.crop_size_d)?;
    let v = cfg.views_per_side;
    let center = (v / 2) as i64;
    let views: Vec<RasterImage> = (0..v * v)
        .into_par_iter()
        .map(|n| {
            let i = (n / v) as i64;
            let j = (n % v) as i64;
            let off_x = (j - center) * i64::from(cfg.view_step);
            let off_y = (i - center) * i64::from(cfg.view_step);
            render_one_view(pre, cfg, off_x, off_y)
        })
        .collect::<Result<_>>()?;
    Ok(ViewGrid { views_per_side: v, views })
}

/// Render from a raw sensor image by routing through `crop_and_align`
/// with the given crop size first.
pub fn render_views_raw(
    src: &RasterImage,
    spec: &CameraSpec,
    route_d: u32,
    cfg: &RenderConfig,
) -> Result<ViewGrid> {
    let pre = crop_and_align(src, spec, route_d)?;
    render_views(&pre, cfg)
}

fn render_one_view(
    pre: &PreprocessedImage,
    cfg: &RenderConfig,
    off_x: i64,
    off_y: i64,
) -> Result<RasterImage> {
    let d = pre.crop_size_d;
    let p = cfg.patch_size;
    let spec = &pre.spec;
    let img = &pre.image;
    let mut out = RasterImage::zeros(pre.grid_cols * p, pre.grid_rows * p);
    for row in 0..pre.grid_rows {
        for col in 0..pre.grid_cols {
            let (cx, cy) = spec.center(row, col);
            // Window in original sensor coordinates, then translated into
            // tile-local coordinates via the tile's own crop origin. Both
            // rendering routes share this arithmetic, which is what makes
            // them bit-identical when the window stays inside the tile.
            let tile_ox = crop_window_origin(cx, d);
            let tile_oy = crop_window_origin(cy, d);
            let win_x = crop_window_origin(cx + off_x as f64, p) - tile_ox;
            let win_y = crop_window_origin(cy + off_y as f64, p) - tile_oy;
            let escapes = win_x < 0
                || win_y < 0
                || win_x + i64::from(p) > i64::from(d)
                || win_y + i64::from(p) > i64::from(d);
            if escapes && !cfg.permit_tile_escape {
                return Err(Error::input(format!(
                    "view window escapes the crop square at microlens ({row},{col})"
                )));
            }
            for j in 0..p {
                for i in 0..p {
                    let gx = i64::from(col * d) + win_x + i64::from(i);
                    let gy = i64::from(row * d) + win_y + i64::from(j);
                    let gx = gx.clamp(0, i64::from(img.width) - 1) as u32;
                    let gy = gy.clamp(0, i64::from(img.height) - 1) as u32;
                    let px = img.get(gx, gy);
                    let (ti, tj) = if cfg.flip_patches { (p - 1 - i, p - 1 - j) } else { (i, j) };
                    out.set(col * p + ti, row * p + tj, px);
                }
            }
        }
    }
    if let (Some(tw), Some(th)) = (cfg.target_width, cfg.target_height) {
        out = resize(&out, tw, th, cfg.resample);
    }
    Ok(out)
}

fn resize(src: &RasterImage, tw: u32, th: u32, mode: Resample) -> RasterImage {
    let mut out = RasterImage::zeros(tw, th);
    let sx = f64::from(src.width) / f64::from(tw);
    let sy = f64::from(src.height) / f64::from(th);
    for y in 0..th {
        for x in 0..tw {
            let u = (f64::from(x) + 0.5) * sx - 0.5;
            let v = (f64::from(y) + 0.5) * sy - 0.5;
            let px = match mode {
                Resample::Nearest => {
                    let ux = u.round().clamp(0.0, f64::from(src.width - 1)) as u32;
                    let vy = v.round().clamp(0.0, f64::from(src.height - 1)) as u32;
                    src.get(ux, vy)
                }
                Resample::Bilinear => {
                    let x0 = u.floor().clamp(0.0, f64::from(src.width - 1)) as u32;
                    let y0 = v.floor().clamp(0.0, f64::from(src.height - 1)) as u32;
                    let x1 = (x0 + 1).min(src.width - 1);
                    let y1 = (y0 + 1).min(src.height - 1);
                    let fx = (u - f64::from(x0)).clamp(0.0, 1.0);
                    let fy = (v - f64::from(y0)).clamp(0.0, 1.0);
                    let a = src.get(x0, y0);
                    let b = src.get(x1, y0);
                    let c = src.get(x0, y1);
                    let e = src.get(x1, y1);
                    std::array::from_fn(|ch| {
                        let top = f64::from(a[ch]) * (1.0 - fx) + f64::from(b[ch]) * fx;
                        let bot = f64::from(c[ch]) * (1.0 - fx) + f64::from(e[ch]) * fx;
                        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
                    })
                }
            };
            out.set(x, y, px);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMetric {
    Mse,
    Psnr,
    MsSsim,
}

/// Mean of the per-view metric over all V^2 view pairs. An infinite
/// per-view PSNR makes the average infinite.
pub fn view_pair_distortion(a: &ViewGrid, b: &ViewGrid, metric: DistortionMetric) -> Result<f64> {
    if a.views_per_side != b.views_per_side {
        return Err(Error::input("view grids have different V"));
    }
    let mut total = 0.0;
    let n = a.views.len() as f64;
    for (va, vb) in a.views.iter().zip(&b.views) {
        let value = match metric {
            DistortionMetric::Mse => va.mse(vb)?,
            DistortionMetric::Psnr => metrics::psnr(va, vb)?,
            DistortionMetric::MsSsim => metrics::ms_ssim(va, vb)?,
        };
        if value.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += value;
    }
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::OpticsMeta;
    use crate::synth::{synth_plenoptic, SynthScene};

    fn toy_spec(cols: u32, rows: u32) -> CameraSpec {
        CameraSpec {
            sensor_width: 100 + (cols - 1) * 60 + 100,
            sensor_height: 100 + (rows - 1) * 70 + 35 + 100,
            microlens_radius: 35.0,
            epa_coefficient: 0.8,
            origin_x: 100.0,
            origin_y: 100.0,
            hex_horizontal_pitch: 60.0,
            hex_vertical_pitch: 70.0,
            column_offset: 35.0,
            complete_cols: cols,
            complete_rows: rows,
            optics: OpticsMeta::default(),
        }
    }

    #[test]
    fn constant_image_constant_views() {
        let spec = toy_spec(3, 2);
        let src = synth_plenoptic(SynthScene::Constant, &spec, 5, 0.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig { patch_size: 8, ..Default::default() };
        let views = render_views(&pre, &cfg).unwrap();
        let (cx, cy) = spec.center(0, 0);
        let color = src.get(cx as u32, cy as u32);
        for v in views.iter() {
            assert_eq!(v.width, 3 * 8);
            assert_eq!(v.height, 2 * 8);
            assert!(v.as_bytes().chunks(3).all(|c| c == color));
        }
    }

    #[test]
    fn uniform_microimages_make_views_identical() {
        // Each microimage a distinct uniform color: every view equals the
        // index-color mosaic regardless of the view offset.
        let spec = toy_spec(3, 3);
        let mut src = RasterImage::zeros(spec.sensor_width, spec.sensor_height);
        for row in 0..3u32 {
            for col in 0..3u32 {
                let (cx, cy) = spec.center(row, col);
                let color = [40 + 60 * row as u8, 40 + 60 * col as u8, 123];
                for dy in -30i64..30 {
                    for dx in -30i64..30 {
                        src.set((cx as i64 + dx) as u32, (cy as i64 + dy) as u32, color);
                    }
                }
            }
        }
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig { views_per_side: 3, patch_size: 4, ..Default::default() };
        let views = render_views(&pre, &cfg).unwrap();
        let reference = views.view(0, 0).clone();
        for v in views.iter() {
            assert_eq!(*v, reference);
        }
    }

    #[test]
    fn central_view_ignores_step() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Textured, &spec, 9, 1.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let a = render_views(&pre, &RenderConfig { patch_size: 8, view_step: 4, ..Default::default() }).unwrap();
        let b = render_views(&pre, &RenderConfig { patch_size: 8, view_step: 0, ..Default::default() }).unwrap();
        let c = (a.views_per_side / 2) as u32;
        assert_eq!(a.view(c, c), b.view(c, c));
    }

    #[test]
    fn window_bounds_enforced() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Constant, &spec, 1, 0.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig { patch_size: 40, ..Default::default() }; // 40 + 4 > 40
        assert!(render_views(&pre, &cfg).is_err());
        let even = RenderConfig { views_per_side: 4, patch_size: 4, ..Default::default() };
        assert!(render_views(&pre, &even).is_err());
        let escape_ok = RenderConfig { patch_size: 40, permit_tile_escape: true, ..Default::default() };
        assert!(render_views(&pre, &escape_ok).is_ok());
    }

    #[test]
    fn raw_and_preprocessed_routes_agree() {
        let spec = toy_spec(3, 3);
        let src = synth_plenoptic(SynthScene::Textured, &spec, 21, 1.0).unwrap();
        let cfg = RenderConfig { patch_size: 12, ..Default::default() };
        let pre = crop_and_align(&src, &spec, 44).unwrap();
        let from_pre = render_views(&pre, &cfg).unwrap();
        let from_raw = render_views_raw(&src, &spec, 48, &cfg).unwrap();
        let mse = view_pair_distortion(&from_pre, &from_raw, DistortionMetric::Mse).unwrap();
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn distortion_metrics() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Gradient, &spec, 2, 0.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig { patch_size: 8, ..Default::default() };
        let views = render_views(&pre, &cfg).unwrap();
        assert_eq!(view_pair_distortion(&views, &views, DistortionMetric::Mse).unwrap(), 0.0);
        assert_eq!(
            view_pair_distortion(&views, &views, DistortionMetric::Psnr).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn single_error_mse_arithmetic() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Constant, &spec, 3, 0.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig { patch_size: 8, ..Default::default() };
        let a = render_views(&pre, &cfg).unwrap();
        let mut b = a.clone();
        let px = b.views[0].get(0, 0);
        b.views[0].set(0, 0, [px[0] ^ 0xFF, px[1], px[2]]);
        let mse = view_pair_distortion(&a, &b, DistortionMetric::Mse).unwrap();
        let v = f64::from(a.views_per_side * a.views_per_side);
        let (w, h) = (f64::from(a.view(0, 0).width), f64::from(a.view(0, 0).height));
        assert!((mse - 255.0 * 255.0 / (v * w * h * 3.0)).abs() < 1e-9);
    }

    #[test]
    fn flip_is_consistent_bijection() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Textured, &spec, 13, 1.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let plain = RenderConfig { patch_size: 8, ..Default::default() };
        let flipped = RenderConfig { patch_size: 8, flip_patches: true, ..Default::default() };
        let a = render_views(&pre, &plain).unwrap();
        let b = render_views(&pre, &flipped).unwrap();
        assert_ne!(a.view(0, 0), b.view(0, 0));
        // Distortion between matching flipped pairs equals plain pairs.
        let a2 = render_views(&pre, &plain).unwrap();
        let b2 = render_views(&pre, &flipped).unwrap();
        let d_plain = view_pair_distortion(&a, &a2, DistortionMetric::Mse).unwrap();
        let d_flip = view_pair_distortion(&b, &b2, DistortionMetric::Mse).unwrap();
        assert_eq!(d_plain, d_flip);
    }

    #[test]
    fn resize_to_target() {
        let spec = toy_spec(2, 2);
        let src = synth_plenoptic(SynthScene::Gradient, &spec, 2, 0.0).unwrap();
        let pre = crop_and_align(&src, &spec, 40).unwrap();
        let cfg = RenderConfig {
            patch_size: 8,
            target_width: Some(23),
            target_height: Some(11),
            ..Default::default()
        };
        let views = render_views(&pre, &cfg).unwrap();
        assert_eq!(views.view(0, 0).width, 23);
        assert_eq!(views.view(0, 0).height, 11);
    }
}
