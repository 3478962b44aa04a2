//! Microlens array geometry and pixel effectiveness classification.
//!
//! A focused plenoptic camera covers the sensor with hexagonally packed
//! circular microlenses of radius `R`. Each microlens forms a microimage;
//! only the pixels inside the effective pixels area (EPA, radius `m*R`)
//! carry usable light-field signal, and only the axis-aligned square of
//! side `sqrt(2)*m*R` inscribed in the EPA feeds sub-aperture rendering.
//! This module models the lattice, derives microimage centers, and labels
//! every sensor pixel by its effectiveness class.

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Documentation-only optics parameters; no computation depends on them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OpticsMeta {
    pub main_focal_length_mm: Option<f64>,
    pub relay_a_mm: Option<f64>,
    pub relay_b_mm: Option<f64>,
    pub microlens_focal_length_mm: Option<f64>,
}

/// Geometry of the microlens array on the sensor.
///
/// Centers lie on a hexagonal lattice: column `c` sits at
/// `origin_x + c * hex_horizontal_pitch`, and within a column rows are
/// `hex_vertical_pitch` apart, with odd columns shifted down by
/// `column_offset`. The declared `complete_cols x complete_rows` grid is
/// the set of microlenses whose discs lie fully on the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub sensor_width: u32,
    pub sensor_height: u32,
    /// Microlens radius R in pixels.
    pub microlens_radius: f64,
    /// EPA radius coefficient m in (0, 1].
    pub epa_coefficient: f64,
    /// Subpixel position of the top-left complete microlens center.
    pub origin_x: f64,
    pub origin_y: f64,
    pub hex_horizontal_pitch: f64,
    pub hex_vertical_pitch: f64,
    /// Vertical shift applied to odd (1-based: even) columns.
    pub column_offset: f64,
    pub complete_cols: u32,
    pub complete_rows: u32,
    pub optics: OpticsMeta,
}

/// One derived microimage center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrolensCenter {
    pub row: u32,
    pub col: u32,
    pub x: f64,
    pub y: f64,
}

impl CameraSpec {
    /// Spec with the standard hex pitch defaults: horizontal sqrt(3)*R,
    /// vertical 2*R, odd-column offset R.
    #[allow(clippy::too_many_arguments)]
    pub fn with_default_pitches(
        sensor_width: u32,
        sensor_height: u32,
        microlens_radius: f64,
        epa_coefficient: f64,
        origin_x: f64,
        origin_y: f64,
        complete_cols: u32,
        complete_rows: u32,
    ) -> Self {
        CameraSpec {
            sensor_width,
            sensor_height,
            microlens_radius,
            epa_coefficient,
            origin_x,
            origin_y,
            hex_horizontal_pitch: 3.0_f64.sqrt() * microlens_radius,
            hex_vertical_pitch: 2.0 * microlens_radius,
            column_offset: microlens_radius,
            complete_cols,
            complete_rows,
            optics: OpticsMeta::default(),
        }
    }

    /// The canonical TSPC instance: 4080x3068 sensor, 66x42 complete
    /// microlenses, working radius 35 px (the 69 px microimage diameter
    /// rounds to R = 34.5; classification follows the working value 35).
    /// Pitch and origin are calibrated so the declared grid is complete
    /// with margin >= R and the boundary-incomplete share of the sensor
    /// lands at its measured ~8% level.
    pub fn tspc() -> Self {
        CameraSpec {
            sensor_width: 4080,
            sensor_height: 3068,
            microlens_radius: 35.0,
            epa_coefficient: 0.8,
            origin_x: 130.0,
            origin_y: 100.0,
            hex_horizontal_pitch: 58.8,
            hex_vertical_pitch: 70.0,
            column_offset: 35.0,
            complete_cols: 66,
            complete_rows: 42,
            optics: OpticsMeta {
                main_focal_length_mm: Some(20.0),
                relay_a_mm: None,
                relay_b_mm: None,
                microlens_focal_length_mm: Some(4.0 / 3.0),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.microlens_radius > 0.0) {
            return Err(Error::spec("microlens_radius must be > 0"));
        }
        if !(self.epa_coefficient > 0.0 && self.epa_coefficient <= 1.0) {
            return Err(Error::spec("epa_coefficient must be in (0, 1]"));
        }
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(Error::spec("sensor dimensions must be positive"));
        }
        if self.complete_cols == 0 || self.complete_rows == 0 {
            return Err(Error::spec("complete grid must be at least 1x1"));
        }
        if !(self.hex_horizontal_pitch > 0.0) || !(self.hex_vertical_pitch > 0.0) {
            return Err(Error::spec("pitches must be > 0"));
        }
        let r = self.microlens_radius;
        let off = if self.complete_cols >= 2 { self.column_offset } else { 0.0 };
        let x_min = self.origin_x;
        let x_max = self.origin_x + f64::from(self.complete_cols - 1) * self.hex_horizontal_pitch;
        let y_min = self.origin_y + off.min(0.0);
        let y_max =
            self.origin_y + f64::from(self.complete_rows - 1) * self.hex_vertical_pitch + off.max(0.0);
        if x_min < r
            || y_min < r
            || x_max > f64::from(self.sensor_width) - r
            || y_max > f64::from(self.sensor_height) - r
        {
            return Err(Error::spec(
                "declared complete grid does not fit the sensor with margin >= R",
            ));
        }
        Ok(())
    }

    /// Center of declared microlens (row, col).
    pub fn center(&self, row: u32, col: u32) -> (f64, f64) {
        let x = self.origin_x + f64::from(col) * self.hex_horizontal_pitch;
        let y = self.origin_y
            + f64::from(row) * self.hex_vertical_pitch
            + if col % 2 == 1 { self.column_offset } else { 0.0 };
        (x, y)
    }

    /// Center of an arbitrary lattice site, declared or not.
    fn lattice_center(&self, row: i64, col: i64) -> (f64, f64) {
        let x = self.origin_x + col as f64 * self.hex_horizontal_pitch;
        let y = self.origin_y
            + row as f64 * self.hex_vertical_pitch
            + if col.rem_euclid(2) == 1 { self.column_offset } else { 0.0 };
        (x, y)
    }

    fn is_declared(&self, row: i64, col: i64) -> bool {
        row >= 0
            && col >= 0
            && (row as u64) < u64::from(self.complete_rows)
            && (col as u64) < u64::from(self.complete_cols)
    }

    /// All declared centers in row-major order.
    pub fn derive_centers(&self) -> Result<Vec<MicrolensCenter>> {
        self.validate()?;
        let mut out = Vec::with_capacity((self.complete_rows * self.complete_cols) as usize);
        for row in 0..self.complete_rows {
            for col in 0..self.complete_cols {
                let (x, y) = self.center(row, col);
                out.push(MicrolensCenter { row, col, x, y });
            }
        }
        Ok(out)
    }

    /// Every lattice site (declared or not) within distance R of the point,
    /// nearest first.
    fn covering_sites(&self, px: f64, py: f64) -> impl Iterator<Item = (i64, i64, f64)> {
        let r = self.microlens_radius;
        let hp = self.hex_horizontal_pitch;
        let c_lo = ((px - r - self.origin_x) / hp).ceil() as i64;
        let c_hi = ((px + r - self.origin_x) / hp).floor() as i64;
        let mut hits: Vec<(i64, i64, f64)> = Vec::new();
        for c in c_lo..=c_hi {
            let off = if c.rem_euclid(2) == 1 { self.column_offset } else { 0.0 };
            let vp = self.hex_vertical_pitch;
            let r_lo = ((py - r - self.origin_y - off) / vp).ceil() as i64;
            let r_hi = ((py + r - self.origin_y - off) / vp).floor() as i64;
            for row in r_lo..=r_hi {
                let (cx, cy) = self.lattice_center(row, c);
                let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                if d2 < r * r {
                    hits.push((row, c, d2));
                }
            }
        }
        hits.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
        hits.into_iter()
    }
}

/// Minimum lossless cutting size: the side of the largest axis-aligned
/// square inscribable in the EPA disc, `sqrt(2) * m * R`.
pub fn min_crop_size(m: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::input("radius must be > 0"));
    }
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::input("EPA coefficient must be in (0, 1]"));
    }
    Ok(std::f64::consts::SQRT_2 * m * radius)
}

/// Pixel effectiveness classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PixelClass {
    /// Dark gaps between microimages.
    InterMicroimage = 0,
    /// Inside a microlens disc that is not in the declared complete grid.
    BoundaryIncomplete = 1,
    /// Inside a complete disc but outside its EPA.
    Vignetting = 2,
    /// Inside the d x d crop square of a complete microlens (and its EPA).
    SubApertureEffective = 3,
    /// Inside the EPA but outside the crop square.
    LfEffectiveOnly = 4,
}

impl PixelClass {
    pub const ALL: [PixelClass; 5] = [
        PixelClass::InterMicroimage,
        PixelClass::BoundaryIncomplete,
        PixelClass::Vignetting,
        PixelClass::SubApertureEffective,
        PixelClass::LfEffectiveOnly,
    ];

    fn from_u8(v: u8) -> PixelClass {
        match v {
            0 => PixelClass::InterMicroimage,
            1 => PixelClass::BoundaryIncomplete,
            2 => PixelClass::Vignetting,
            3 => PixelClass::SubApertureEffective,
            _ => PixelClass::LfEffectiveOnly,
        }
    }
}

impl fmt::Display for PixelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PixelClass::InterMicroimage => "inter_microimage",
            PixelClass::BoundaryIncomplete => "boundary_incomplete",
            PixelClass::Vignetting => "vignetting",
            PixelClass::SubApertureEffective => "sub_aperture_effective",
            PixelClass::LfEffectiveOnly => "lf_effective_only",
        };
        f.write_str(name)
    }
}

/// Dense per-pixel class labels for a sensor.
#[derive(Debug, Clone)]
pub struct PixelClassMap {
    pub width: u32,
    pub height: u32,
    labels: Vec<u8>,
}

impl PixelClassMap {
    pub fn get(&self, x: u32, y: u32) -> PixelClass {
        PixelClass::from_u8(self.labels[(y as usize) * (self.width as usize) + x as usize])
    }

    pub fn count(&self, class: PixelClass) -> u64 {
        let tag = class as u8;
        self.labels.iter().filter(|&&l| l == tag).count() as u64
    }

    /// Fraction of total pixels per class; sums to 1 by construction.
    pub fn class_fractions(&self) -> BTreeMap<PixelClass, f64> {
        let total = self.labels.len() as f64;
        let mut counts = [0u64; 5];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        PixelClass::ALL
            .iter()
            .map(|&c| (c, counts[c as usize] as f64 / total))
            .collect()
    }
}

/// Top-left pixel of the d x d crop window centered on a subpixel center.
/// Rounding is floor(center - d/2 + 0.5): half-pixel ties resolve toward
/// negative infinity, keeping the layout deterministic for subpixel centers.
pub fn crop_window_origin(center: f64, d: u32) -> i64 {
    (center - f64::from(d) / 2.0 + 0.5).floor() as i64
}

/// True when the d x d crop squares of some pair of neighboring declared
/// microlenses would overlap.
pub fn crop_squares_overlap(spec: &CameraSpec, d: u32) -> bool {
    let d = f64::from(d);
    let hp = spec.hex_horizontal_pitch;
    let vp = spec.hex_vertical_pitch;
    let off = spec.column_offset;
    let mut pairs: Vec<(f64, f64)> = vec![(0.0, vp)];
    if spec.complete_cols >= 2 {
        // Adjacent-column displacement for every relative row shift that
        // could come close: off, off - vp, off + vp.
        for dy in [off, off - vp, off + vp] {
            pairs.push((hp, dy));
        }
    }
    pairs
        .iter()
        .any(|&(dx, dy)| dx.abs() < d && dy.abs() < d && (spec.complete_rows >= 2 || dx != 0.0))
}

/// Label every sensor pixel. Disc membership samples the pixel center
/// (x + 0.5, y + 0.5); distance strictly less than R counts as inside.
/// Class priority follows the enum order; when a pixel falls inside
/// several declared discs the nearest center resolves EPA and crop-square
/// membership.
pub fn classify_pixels(spec: &CameraSpec, crop_size_d: u32) -> Result<PixelClassMap> {
    spec.validate()?;
    let d_f = f64::from(crop_size_d);
    if d_f > 2.0 * spec.microlens_radius {
        return Err(Error::input(format!(
            "crop size {} exceeds microimage diameter {}",
            crop_size_d,
            2.0 * spec.microlens_radius
        )));
    }
    if crop_squares_overlap(spec, crop_size_d) {
        return Err(Error::input(format!(
            "crop size {crop_size_d} makes neighboring crop squares overlap"
        )));
    }

    let width = spec.sensor_width as usize;
    let height = spec.sensor_height as usize;
    let mr = spec.epa_coefficient * spec.microlens_radius;

    let mut labels = vec![0u8; width * height];
    labels
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            let py = y as f64 + 0.5;
            for (x, out) in row.iter_mut().enumerate() {
                let px = x as f64 + 0.5;
                let mut nearest_declared: Option<(i64, i64, f64)> = None;
                let mut in_non_declared = false;
                let mut in_any = false;
                for (r, c, d2) in spec.covering_sites(px, py) {
                    in_any = true;
                    if spec.is_declared(r, c) {
                        if nearest_declared.is_none() {
                            nearest_declared = Some((r, c, d2));
                        }
                    } else {
                        in_non_declared = true;
                    }
                }
                *out = if !in_any {
                    PixelClass::InterMicroimage as u8
                } else if in_non_declared {
                    PixelClass::BoundaryIncomplete as u8
                } else {
                    let (r, c, d2) = nearest_declared.expect("covered pixel has a declared site");
                    if d2 >= mr * mr {
                        PixelClass::Vignetting as u8
                    } else {
                        let (cx, cy) = spec.lattice_center(r, c);
                        let tlx = crop_window_origin(cx, crop_size_d);
                        let tly = crop_window_origin(cy, crop_size_d);
                        let in_square = (x as i64) >= tlx
                            && (x as i64) < tlx + i64::from(crop_size_d)
                            && (y as i64) >= tly
                            && (y as i64) < tly + i64::from(crop_size_d);
                        if in_square {
                            PixelClass::SubApertureEffective as u8
                        } else {
                            PixelClass::LfEffectiveOnly as u8
                        }
                    }
                };
            }
        });

    Ok(PixelClassMap {
        width: spec.sensor_width,
        height: spec.sensor_height,
        labels,
    })
}

/// Uncovered-area fraction of the ideal infinite hexagonal packing,
/// rasterized over a window spanning `cells_x x cells_y` lattice cells
/// (cell = horizontal pitch x vertical pitch). Converges to
/// 1 - pi/(2*sqrt(3)) ~ 0.0931 as the radius grows.
pub fn ideal_inter_microimage_fraction(radius: f64, cells_x: u32, cells_y: u32) -> f64 {
    let hp = 3.0_f64.sqrt() * radius;
    let vp = 2.0 * radius;
    let w = (f64::from(cells_x) * hp).floor() as usize;
    let h = (f64::from(cells_y) * vp).floor() as usize;
    // Interior lattice with a generous declared grid; the window sits far
    // from any boundary effect because every site is "declared".
    let spec = CameraSpec {
        sensor_width: u32::MAX,
        sensor_height: u32::MAX,
        microlens_radius: radius,
        epa_coefficient: 1.0,
        origin_x: 0.0,
        origin_y: 0.0,
        hex_horizontal_pitch: hp,
        hex_vertical_pitch: vp,
        column_offset: radius,
        complete_cols: u32::MAX,
        complete_rows: u32::MAX,
        optics: OpticsMeta::default(),
    };
    let uncovered: u64 = (0..h)
        .into_par_iter()
        .map(|y| {
            let py = y as f64 + 0.5;
            let mut n = 0u64;
            for x in 0..w {
                let px = x as f64 + 0.5;
                if spec.covering_sites(px, py).next().is_none() {
                    n += 1;
                }
            }
            n
        })
        .sum();
    uncovered as f64 / (w * h) as f64
}

// --- key-value config serialization ---

impl CameraSpec {
    /// Render as the one-key-per-line config format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        s.push_str("# focused plenoptic camera geometry\n");
        s.push_str(&format!("sensor_width = {}\n", self.sensor_width));
        s.push_str(&format!("sensor_height = {}\n", self.sensor_height));
        s.push_str(&format!("microlens_radius = {}\n", self.microlens_radius));
        s.push_str(&format!("epa_coefficient = {}\n", self.epa_coefficient));
        s.push_str(&format!("origin_x = {}\n", self.origin_x));
        s.push_str(&format!("origin_y = {}\n", self.origin_y));
        s.push_str(&format!("hex_horizontal_pitch = {}\n", self.hex_horizontal_pitch));
        s.push_str(&format!("hex_vertical_pitch = {}\n", self.hex_vertical_pitch));
        s.push_str(&format!("column_offset = {}\n", self.column_offset));
        s.push_str(&format!("complete_cols = {}\n", self.complete_cols));
        s.push_str(&format!("complete_rows = {}\n", self.complete_rows));
        let opt = |s: &mut String, key: &str, v: Option<f64>| {
            if let Some(v) = v {
                s.push_str(&format!("{key} = {v}\n"));
            }
        };
        opt(&mut s, "main_focal_length_mm", self.optics.main_focal_length_mm);
        opt(&mut s, "relay_a_mm", self.optics.relay_a_mm);
        opt(&mut s, "relay_b_mm", self.optics.relay_b_mm);
        opt(
            &mut s,
            "microlens_focal_length_mm",
            self.optics.microlens_focal_length_mm,
        );
        s
    }

    pub fn from_config_str(text: &str) -> Result<CameraSpec> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::spec(format!("config line {}: expected 'key = value'", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let take_f64 = |map: &BTreeMap<String, String>, key: &str| -> Result<f64> {
            map.get(key)
                .ok_or_else(|| Error::spec(format!("config missing key '{key}'")))?
                .parse::<f64>()
                .map_err(|_| Error::spec(format!("config key '{key}' is not a number")))
        };
        let take_u32 = |map: &BTreeMap<String, String>, key: &str| -> Result<u32> {
            map.get(key)
                .ok_or_else(|| Error::spec(format!("config missing key '{key}'")))?
                .parse::<u32>()
                .map_err(|_| Error::spec(format!("config key '{key}' is not a count")))
        };
        let opt_f64 = |map: &BTreeMap<String, String>, key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::spec(format!("config key '{key}' is not a number")))
                })
                .transpose()
        };
        let spec = CameraSpec {
            sensor_width: take_u32(&map, "sensor_width")?,
            sensor_height: take_u32(&map, "sensor_height")?,
            microlens_radius: take_f64(&map, "microlens_radius")?,
            epa_coefficient: take_f64(&map, "epa_coefficient")?,
            origin_x: take_f64(&map, "origin_x")?,
            origin_y: take_f64(&map, "origin_y")?,
            hex_horizontal_pitch: take_f64(&map, "hex_horizontal_pitch")?,
            hex_vertical_pitch: take_f64(&map, "hex_vertical_pitch")?,
            column_offset: take_f64(&map, "column_offset")?,
            complete_cols: take_u32(&map, "complete_cols")?,
            complete_rows: take_u32(&map, "complete_rows")?,
            optics: OpticsMeta {
                main_focal_length_mm: opt_f64(&map, "main_focal_length_mm")?,
                relay_a_mm: opt_f64(&map, "relay_a_mm")?,
                relay_b_mm: opt_f64(&map, "relay_b_mm")?,
                microlens_focal_length_mm: opt_f64(&map, "microlens_focal_length_mm")?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<CameraSpec> {
        CameraSpec::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_2x2() -> CameraSpec {
        CameraSpec {
            sensor_width: 200,
            sensor_height: 220,
            microlens_radius: 35.0,
            epa_coefficient: 0.8,
            origin_x: 35.0,
            origin_y: 35.0,
            hex_horizontal_pitch: 60.62,
            hex_vertical_pitch: 70.0,
            column_offset: 35.0,
            complete_cols: 2,
            complete_rows: 2,
            optics: OpticsMeta::default(),
        }
    }

    #[test]
    fn centers_2x2_grid() {
        let centers = toy_2x2().derive_centers().unwrap();
        let got: Vec<(f64, f64)> = centers.iter().map(|c| (c.x, c.y)).collect();
        assert_eq!(got, vec![(35.0, 35.0), (95.62, 70.0), (35.0, 105.0), (95.62, 140.0)]);
        assert_eq!(centers[1].row, 0);
        assert_eq!(centers[1].col, 1);
    }

    #[test]
    fn centers_single() {
        let mut spec = toy_2x2();
        spec.complete_cols = 1;
        spec.complete_rows = 1;
        let centers = spec.derive_centers().unwrap();
        assert_eq!(centers.len(), 1);
        assert_eq!((centers[0].x, centers[0].y), (35.0, 35.0));
    }

    #[test]
    fn centers_tspc_count_and_margins() {
        let spec = CameraSpec::tspc();
        let centers = spec.derive_centers().unwrap();
        assert_eq!(centers.len(), 66 * 42);
        let r = spec.microlens_radius;
        for c in &centers {
            assert!(c.x >= r && c.x <= 4080.0 - r, "x margin violated at {c:?}");
            assert!(c.y >= r && c.y <= 3068.0 - r, "y margin violated at {c:?}");
        }
    }

    #[test]
    fn min_crop_size_values() {
        assert!((min_crop_size(0.8, 35.0).unwrap() - 39.5980).abs() < 0.01);
        assert!((min_crop_size(1.0, 1.0).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((min_crop_size(0.5, 100.0).unwrap() - 70.7107).abs() < 1e-4);
        assert!(min_crop_size(0.0, 35.0).is_err());
        assert!(min_crop_size(1.2, 35.0).is_err());
        assert!(min_crop_size(0.8, 0.0).is_err());
        assert!(min_crop_size(0.8, -1.0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = toy_2x2();
        s.origin_x = 10.0; // margin < R
        assert!(s.validate().is_err());
        let mut s = toy_2x2();
        s.epa_coefficient = 0.0;
        assert!(s.validate().is_err());
        let mut s = toy_2x2();
        s.microlens_radius = -3.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_microlens_full_epa_has_no_vignetting_in_square() {
        // m = 1: the EPA is the whole disc; the inscribed square of the
        // disc (d = 2R/sqrt(2)) contains no vignetting pixels.
        let spec = CameraSpec {
            sensor_width: 80,
            sensor_height: 80,
            microlens_radius: 35.0,
            epa_coefficient: 1.0,
            origin_x: 40.0,
            origin_y: 40.0,
            hex_horizontal_pitch: 61.0,
            hex_vertical_pitch: 70.0,
            column_offset: 35.0,
            complete_cols: 1,
            complete_rows: 1,
            optics: OpticsMeta::default(),
        };
        let d = (2.0 * 35.0 / std::f64::consts::SQRT_2).floor() as u32; // 49
        let map = classify_pixels(&spec, d).unwrap();
        let tlx = crop_window_origin(40.0, d);
        let tly = crop_window_origin(40.0, d);
        for y in 0..80u32 {
            for x in 0..80u32 {
                let in_square = (x as i64) >= tlx
                    && (x as i64) < tlx + i64::from(d)
                    && (y as i64) >= tly
                    && (y as i64) < tly + i64::from(d);
                if in_square {
                    assert_ne!(map.get(x, y), PixelClass::Vignetting, "({x},{y})");
                }
            }
        }
        assert_eq!(map.count(PixelClass::Vignetting) + map.count(PixelClass::LfEffectiveOnly) > 0, true);
    }

    #[test]
    fn fractions_sum_to_one() {
        let map = classify_pixels(&toy_2x2(), 40).unwrap();
        let total: f64 = map.class_fractions().values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crop_overlap_detected() {
        let spec = toy_2x2();
        assert!(classify_pixels(&spec, 69).is_err()); // 69 > pitches - overlap before diameter check
        assert!(classify_pixels(&spec, 80).is_err()); // > 2R
        assert!(classify_pixels(&spec, 48).is_ok());
    }

    #[test]
    fn monotonic_in_d() {
        // Growing d only converts LfEffectiveOnly/Vignetting pixels into
        // SubApertureEffective, never the reverse.
        let spec = toy_2x2();
        let small = classify_pixels(&spec, 40).unwrap();
        let large = classify_pixels(&spec, 48).unwrap();
        for y in 0..spec.sensor_height {
            for x in 0..spec.sensor_width {
                let a = small.get(x, y);
                let b = large.get(x, y);
                if a == b {
                    continue;
                }
                assert_eq!(b, PixelClass::SubApertureEffective, "({x},{y}): {a:?} -> {b:?}");
                assert!(
                    a == PixelClass::LfEffectiveOnly || a == PixelClass::Vignetting,
                    "({x},{y}): {a:?} -> {b:?}"
                );
            }
        }
    }

    #[test]
    fn sub_aperture_within_inscribed_square_at_dmin() {
        // At d = floor(dmin) every sub-aperture pixel sits inside the
        // inscribed square of its EPA.
        let spec = toy_2x2();
        let dmin = min_crop_size(spec.epa_coefficient, spec.microlens_radius).unwrap();
        let d = dmin.floor() as u32;
        let map = classify_pixels(&spec, d).unwrap();
        let centers = spec.derive_centers().unwrap();
        for y in 0..spec.sensor_height {
            for x in 0..spec.sensor_width {
                if map.get(x, y) != PixelClass::SubApertureEffective {
                    continue;
                }
                let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                let inside = centers.iter().any(|c| {
                    (px - c.x).abs() <= dmin / 2.0 + 0.5 && (py - c.y).abs() <= dmin / 2.0 + 0.5
                });
                assert!(inside, "({x},{y}) outside every inscribed square");
            }
        }
    }

    #[test]
    fn config_roundtrip() {
        let spec = CameraSpec::tspc();
        let text = spec.to_config_string();
        let back = CameraSpec::from_config_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn config_rejects_garbage() {
        assert!(CameraSpec::from_config_str("sensor_width = fish\n").is_err());
        assert!(CameraSpec::from_config_str("").is_err());
        assert!(CameraSpec::from_config_str("whatever\n").is_err());
    }
}
