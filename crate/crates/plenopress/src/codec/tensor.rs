//! Dense C x H x W feature maps, 64-bit throughout.
//!
//! All codec arithmetic runs in f64; this is the verification-mode
//! contract that makes bitstreams reproducible. Model parameters are
//! stored as f32 (see `ModelParams`), widened on load.

use crate::error::{Error, Result};
use crate::raster::RasterImage;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureTensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::input(format!(
                "tensor data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(FeatureTensor { channels, height, width, data })
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &FeatureTensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Finiteness invariant; checked after forward stages in verify mode.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("{what}: non-finite value in tensor")));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureTensor {
        FeatureTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &FeatureTensor) -> FeatureTensor {
        debug_assert!(self.same_shape(other));
        FeatureTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Image samples scaled to [0, 1], shape 3 x H x W.
    pub fn from_image_unit(img: &RasterImage) -> FeatureTensor {
        let h = img.height as usize;
        let w = img.width as usize;
        let mut t = FeatureTensor::zeros(3, h, w);
        for y in 0..h {
            let row = img.row(y as u32);
            for x in 0..w {
                for c in 0..3 {
                    t.data[(c * h + y) * w + x] = f64::from(row[x * 3 + c]) / 255.0;
                }
            }
        }
        t
    }

    /// Back to 8-bit RGB: scale by 255, round, clamp.
    pub fn to_image_unit(&self) -> Result<RasterImage> {
        if self.channels != 3 {
            return Err(Error::input("to_image_unit: tensor must have 3 channels"));
        }
        let mut img = RasterImage::zeros(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px: [u8; 3] = std::array::from_fn(|c| {
                    (self.get(c, y, x) * 255.0).round().clamp(0.0, 255.0) as u8
                });
                img.set(x as u32, y as u32, px);
            }
        }
        Ok(img)
    }

    /// Mean squared error between same-shape tensors.
    pub fn mse(&self, other: &FeatureTensor) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::input("tensor mse: shape mismatch"));
        }
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(s / self.data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_roundtrip_exact_on_unit_grid() {
        let mut img = RasterImage::zeros(6, 4);
        for y in 0..4 {
            for x in 0..6 {
                img.set(x, y, [(x * 40) as u8, (y * 60) as u8, 255]);
            }
        }
        let t = FeatureTensor::from_image_unit(&img);
        assert_eq!(t.shape(), (3, 4, 6));
        let back = t.to_image_unit().unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn finite_check() {
        let mut t = FeatureTensor::zeros(1, 2, 2);
        assert!(t.check_finite("ok").is_ok());
        t.set(0, 0, 0, f64::NAN);
        assert!(t.check_finite("bad").is_err());
    }
}
