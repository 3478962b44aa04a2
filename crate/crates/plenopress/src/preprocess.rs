//! Sub-aperture-lossless preprocessing: devignetting, microimage cropping,
//! and alignment of the hexagonal microimage grid to a rectangle.
//!
//! Cropping copies the d x d window centered on each complete microlens
//! center into a rectangular tile grid. Because windows are taken at the
//! true hexagonal centers and written to rectangular tile slots, the
//! half-pitch translation of even columns happens implicitly and no pixel
//! is ever resampled, which is what keeps rendering from the preprocessed
//! image bit-identical to rendering from the source.

use crate::camera::{crop_window_origin, min_crop_size, CameraSpec};
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// A cropped-and-aligned plenoptic image plus the layout metadata needed
/// to interpret its tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage {
    pub image: RasterImage,
    pub crop_size_d: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub spec: CameraSpec,
}

/// White-image division with a relative floor on the divisor:
/// `out = clamp(round(raw * maxw / max(white, floor * maxw)))` per channel,
/// where `maxw` is the white image's per-channel maximum.
pub fn devignette(raw: &RasterImage, white: &RasterImage, floor: f64) -> Result<RasterImage> {
    if !raw.same_dims(white) {
        return Err(Error::input("devignette: raw and white dimensions differ"));
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::input("devignette: floor must be in (0, 1)"));
    }
    let mut maxw = [0u8; 3];
    for y in 0..white.height {
        for x in 0..white.width {
            let p = white.get(x, y);
            for c in 0..3 {
                maxw[c] = maxw[c].max(p[c]);
            }
        }
    }
    if maxw.iter().any(|&m| m == 0) {
        return Err(Error::input("devignette: white image has an all-zero channel"));
    }
    let mut out = RasterImage::zeros(raw.width, raw.height);
    for y in 0..raw.height {
        for x in 0..raw.width {
            let rp = raw.get(x, y);
            let wp = white.get(x, y);
            let mut o = [0u8; 3];
            for c in 0..3 {
                let m = f64::from(maxw[c]);
                let w = f64::from(wp[c]).max(floor * m);
                let v = (f64::from(rp[c]) * m / w).round();
                o[c] = v.clamp(0.0, 255.0) as u8;
            }
            out.set(x, y, o);
        }
    }
    Ok(out)
}

fn check_crop_size(spec: &CameraSpec, d: u32) -> Result<()> {
    let dmin = min_crop_size(spec.epa_coefficient, spec.microlens_radius)?;
    if f64::from(d) < dmin.ceil() {
        return Err(Error::input(format!(
            "crop size {d} below the lossless minimum {:.2} (need >= {})",
            dmin,
            dmin.ceil()
        )));
    }
    if d % 2 != 0 {
        return Err(Error::input(format!("crop size {d} must be even")));
    }
    Ok(())
}

/// Cut the d x d window around every complete microlens center and place
/// the tiles on a rectangular grid in microlens (row, col) order.
pub fn crop_and_align(src: &RasterImage, spec: &CameraSpec, d: u32) -> Result<PreprocessedImage> {
    spec.validate()?;
    check_crop_size(spec, d)?;
    if src.width != spec.sensor_width || src.height != spec.sensor_height {
        return Err(Error::input(format!(
            "source is {}x{} but the spec sensor is {}x{}",
            src.width, src.height, spec.sensor_width, spec.sensor_height
        )));
    }
    let rows = spec.complete_rows;
    let cols = spec.complete_cols;
    // Validate all windows before copying anything.
    for row in 0..rows {
        for col in 0..cols {
            let (cx, cy) = spec.center(row, col);
            let tlx = crop_window_origin(cx, d);
            let tly = crop_window_origin(cy, d);
            if tlx < 0
                || tly < 0
                || tlx + i64::from(d) > i64::from(src.width)
                || tly + i64::from(d) > i64::from(src.height)
            {
                return Err(Error::input(format!(
                    "crop window of microlens ({row},{col}) leaves the sensor"
                )));
            }
        }
    }
    let out_w = cols * d;
    let out_h = rows * d;
    let mut image = RasterImage::zeros(out_w, out_h);
    let row_bytes = (out_w as usize) * 3;
    image
        .as_bytes_mut()
        .par_chunks_mut(row_bytes * d as usize)
        .enumerate()
        .for_each(|(row, band)| {
            for col in 0..cols {
                let (cx, cy) = spec.center(row as u32, col);
                let tlx = crop_window_origin(cx, d) as usize;
                let tly = crop_window_origin(cy, d) as usize;
                for j in 0..d as usize {
                    let src_row = src.row((tly + j) as u32);
                    let src_slice = &src_row[tlx * 3..(tlx + d as usize) * 3];
                    let dst_start = j * row_bytes + (col as usize) * (d as usize) * 3;
                    band[dst_start..dst_start + d as usize * 3].copy_from_slice(src_slice);
                }
            }
        });
    Ok(PreprocessedImage {
        image,
        crop_size_d: d,
        grid_rows: rows,
        grid_cols: cols,
        spec: spec.clone(),
    })
}

/// Inverse layout: write each tile back to its centered sensor window;
/// all other pixels stay zero.
pub fn reembed(pre: &PreprocessedImage) -> RasterImage {
    let spec = &pre.spec;
    let d = pre.crop_size_d;
    let mut out = RasterImage::zeros(spec.sensor_width, spec.sensor_height);
    for row in 0..pre.grid_rows {
        for col in 0..pre.grid_cols {
            let (cx, cy) = spec.center(row, col);
            let tlx = crop_window_origin(cx, d) as u32;
            let tly = crop_window_origin(cy, d) as u32;
            for j in 0..d {
                for i in 0..d {
                    out.set(tlx + i, tly + j, pre.image.get(col * d + i, row * d + j));
                }
            }
        }
    }
    out
}

/// Sequential non-overlapping row-major patches; partial edge patches are
/// discarded. The patch side must be a multiple of d so every patch holds
/// complete cropped microimages.
pub fn extract_patches(pre: &PreprocessedImage, patch: u32) -> Result<Vec<RasterImage>> {
    if patch == 0 || patch % pre.crop_size_d != 0 {
        return Err(Error::input(format!(
            "patch size {} is not a multiple of the crop size {}",
            patch, pre.crop_size_d
        )));
    }
    let nx = pre.image.width / patch;
    let ny = pre.image.height / patch;
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for py in 0..ny {
        for px in 0..nx {
            let mut p = RasterImage::zeros(patch, patch);
            for j in 0..patch {
                for i in 0..patch {
                    p.set(i, j, pre.image.get(px * patch + i, py * patch + j));
                }
            }
            out.push(p);
        }
    }
    Ok(out)
}

impl PreprocessedImage {
    /// Sidecar metadata path for an image path: `<path>.meta`.
    pub fn sidecar_path(image_path: &Path) -> PathBuf {
        let mut os = image_path.as_os_str().to_os_string();
        os.push(".meta");
        PathBuf::from(os)
    }

    /// Writes the image plus the key-value sidecar holding d, the grid
    /// dimensions, and the full camera spec (prefixed `spec.`).
    pub fn save(&self, image_path: &Path) -> Result<()> {
        self.image.save(image_path)?;
        let mut meta = String::new();
        meta.push_str(&format!("crop_size_d = {}\n", self.crop_size_d));
        meta.push_str(&format!("grid_rows = {}\n", self.grid_rows));
        meta.push_str(&format!("grid_cols = {}\n", self.grid_cols));
        for line in self.spec.to_config_string().lines() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            meta.push_str("spec.");
            meta.push_str(line);
            meta.push('\n');
        }
        std::fs::write(Self::sidecar_path(image_path), meta)?;
        Ok(())
    }

    pub fn load(image_path: &Path) -> Result<PreprocessedImage> {
        let image = RasterImage::load(image_path)?;
        let meta = std::fs::read_to_string(Self::sidecar_path(image_path))?;
        let mut d = None;
        let mut rows = None;
        let mut cols = None;
        let mut spec_text = String::new();
        for line in meta.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("spec.") {
                spec_text.push_str(rest);
                spec_text.push('\n');
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::input("sidecar: expected 'key = value'"))?;
            let v = v.trim();
            match k.trim() {
                "crop_size_d" => d = v.parse::<u32>().ok(),
                "grid_rows" => rows = v.parse::<u32>().ok(),
                "grid_cols" => cols = v.parse::<u32>().ok(),
                _ => {}
            }
        }
        let crop_size_d = d.ok_or_else(|| Error::input("sidecar missing crop_size_d"))?;
        let grid_rows = rows.ok_or_else(|| Error::input("sidecar missing grid_rows"))?;
        let grid_cols = cols.ok_or_else(|| Error::input("sidecar missing grid_cols"))?;
        let spec = CameraSpec::from_config_str(&spec_text)?;
        if image.width != grid_cols * crop_size_d || image.height != grid_rows * crop_size_d {
            return Err(Error::input(format!(
                "image {}x{} does not match sidecar layout {}x{} tiles of {}",
                image.width, image.height, grid_cols, grid_rows, crop_size_d
            )));
        }
        Ok(PreprocessedImage {
            image,
            crop_size_d,
            grid_rows,
            grid_cols,
            spec,
        })
    }
}
