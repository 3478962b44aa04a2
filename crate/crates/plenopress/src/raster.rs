//! 8-bit RGB raster images with PNG and binary PPM (P6) I/O.

use crate::error::{Error, Result};
use image::{ImageEncoder, ImageFormat};
use std::io::BufWriter;
use std::path::Path;

/// Dense row-major interleaved RGB image, 8 bits per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    pub const CHANNELS: u32 = 3;

    pub fn zeros(width: u32, height: u32) -> Self {
        RasterImage {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize) * 3],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity((width as usize) * (height as usize) * 3);
        for _ in 0..(width as usize) * (height as usize) {
            data.extend_from_slice(&rgb);
        }
        RasterImage { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) * 3 {
            return Err(Error::input(format!(
                "raw buffer length {} does not match {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(RasterImage { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        ((y as usize) * (self.width as usize) + (x as usize)) * 3
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Row slice of interleaved RGB bytes.
    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize * 3;
        let start = (y as usize) * w;
        &self.data[start..start + w]
    }

    pub fn row_mut(&mut self, y: u32) -> &mut [u8] {
        let w = self.width as usize * 3;
        let start = (y as usize) * w;
        &mut self.data[start..start + w]
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean squared error over all RGB samples.
    pub fn mse(&self, other: &RasterImage) -> Result<f64> {
        if !self.same_dims(other) {
            return Err(Error::input("MSE: image dimensions differ"));
        }
        let sum: u64 = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| {
                let d = i64::from(a) - i64::from(b);
                (d * d) as u64
            })
            .sum();
        Ok(sum as f64 / self.data.len() as f64)
    }

    pub fn load(path: &Path) -> Result<RasterImage> {
        let img = image::open(path)?.into_rgb8();
        let (width, height) = img.dimensions();
        Ok(RasterImage {
            width,
            height,
            data: img.into_raw(),
        })
    }

    /// Writes PNG or binary PPM depending on the file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let file = std::fs::File::create(path)?;
        let mut writer = BufWriter::new(file);
        match ext.as_str() {
            "ppm" => {
                let enc = image::codecs::pnm::PnmEncoder::new(&mut writer).with_subtype(
                    image::codecs::pnm::PnmSubtype::Pixmap(image::codecs::pnm::SampleEncoding::Binary),
                );
                enc.write_image(&self.data, self.width, self.height, image::ExtendedColorType::Rgb8)?;
            }
            "png" | "" => {
                let enc = image::codecs::png::PngEncoder::new(&mut writer);
                enc.write_image(&self.data, self.width, self.height, image::ExtendedColorType::Rgb8)?;
            }
            other => {
                return Err(Error::input(format!(
                    "unsupported output format '.{other}' (use .png or .ppm)"
                )));
            }
        }
        Ok(())
    }

    /// Guess a format from the extension for reading; `image::open` sniffs
    /// content, so this is only used to reject unknown extensions early.
    pub fn supported_input(path: &Path) -> bool {
        ImageFormat::from_path(path)
            .map(|f| matches!(f, ImageFormat::Png | ImageFormat::Pnm))
            .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_accessors() {
        let mut img = RasterImage::zeros(4, 3);
        img.set(2, 1, [10, 20, 30]);
        assert_eq!(img.get(2, 1), [10, 20, 30]);
        assert_eq!(img.get(0, 0), [0, 0, 0]);
    }

    #[test]
    fn mse_single_error() {
        let a = RasterImage::zeros(8, 8);
        let mut b = RasterImage::zeros(8, 8);
        b.set(3, 3, [255, 0, 0]);
        let mse = a.mse(&b).unwrap();
        assert!((mse - 255.0 * 255.0 / (8.0 * 8.0 * 3.0)).abs() < 1e-9);
    }

    #[test]
    fn png_and_ppm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RasterImage::zeros(5, 7);
        for y in 0..7 {
            for x in 0..5 {
                img.set(x, y, [x as u8 * 40, y as u8 * 30, 200]);
            }
        }
        for name in ["t.png", "t.ppm"] {
            let p = dir.path().join(name);
            img.save(&p).unwrap();
            let back = RasterImage::load(&p).unwrap();
            assert_eq!(img, back, "{name}");
        }
    }
}
