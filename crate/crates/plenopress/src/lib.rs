//! Focused plenoptic image compression toolkit.
//!
//! The pipeline runs end to end at desk scale: hexagonal microlens
//! geometry and pixel classification, sub-aperture-lossless preprocessing
//! (devignetting, microimage cropping and rectangular alignment),
//! stitching-based sub-aperture view rendering, a learned codec with a
//! global-attention hyperprior-context network and real range-coded
//! bitstreams, and the evaluation side: view-averaged PSNR / MS-SSIM,
//! bits per pixel against the sensor resolution, and BD-rate.

pub mod camera;
pub mod cli;
pub mod codec;
pub mod coder;
pub mod detmath;
pub mod error;
pub mod metrics;
pub mod preprocess;
pub mod raster;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
