//! Command-line pipeline: preprocess, render, encode, decode, metrics,
//! bdrate, synth, gradcheck. All subcommands are batch operations; exit
//! codes are 0 success, 2 usage, 3 data contract violation, 4 I/O.

use crate::camera::CameraSpec;
use crate::codec::{grad_check, GradTarget, ModelParams};
use crate::coder::{decode_image, encode_image, Bitstream, CodecConfig};
use crate::error::{Error, Result};
use crate::metrics::{bd_rate, bpp, ms_ssim, psnr, QualityAxis, RdCurve, RdPoint};
use crate::preprocess::{crop_and_align, devignette, PreprocessedImage};
use crate::raster::RasterImage;
use crate::render::{render_views, render_views_raw, RenderConfig, Resample};
use crate::synth::{synth_plenoptic, SynthScene};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "plenopress",
    about = "Focused plenoptic image compression toolkit",
    version
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run all numerics in 64-bit verification mode. This is also the
    /// default; the flag documents intent in scripts.
    #[arg(long, global = true)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct RenderFlags {
    /// Views per side (odd).
    #[arg(long, default_value_t = 5)]
    pub views: u32,
    /// Patch size p.
    #[arg(long, default_value_t = 16)]
    pub patch: u32,
    /// View step s in pixels per view index.
    #[arg(long, default_value_t = 1)]
    pub step: u32,
    /// Rotate patches 180 degrees.
    #[arg(long)]
    pub flip: bool,
    #[arg(long)]
    pub target_width: Option<u32>,
    #[arg(long)]
    pub target_height: Option<u32>,
    /// Resampling for target dimensions: nearest|bilinear.
    #[arg(long, default_value = "bilinear")]
    pub resample: String,
    /// Let view windows read neighbor-tile pixels instead of failing.
    #[arg(long)]
    pub permit_escape: bool,
}

impl RenderFlags {
    fn to_config(&self) -> Result<RenderConfig> {
        let resample = match self.resample.as_str() {
            "nearest" => Resample::Nearest,
            "bilinear" => Resample::Bilinear,
            other => return Err(Error::input(format!("unknown resample mode '{other}'"))),
        };
        Ok(RenderConfig {
            views_per_side: self.views,
            patch_size: self.patch,
            view_step: self.step,
            flip_patches: self.flip,
            target_width: self.target_width,
            target_height: self.target_height,
            resample,
            permit_tile_escape: self.permit_escape,
        })
    }
}

#[derive(Args)]
pub struct ModelFlags {
    /// Model parameter file; when absent, parameters are built
    /// deterministically from --init-seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Latent channels N (seeded init only).
    #[arg(long, default_value_t = 128)]
    pub model_n: usize,
    /// Hyper channels M (seeded init only).
    #[arg(long, default_value_t = 192)]
    pub model_m: usize,
    /// Attention heads (seeded init only; 0 = default for N).
    #[arg(long, default_value_t = 0)]
    pub heads: usize,
}

impl ModelFlags {
    fn load(&self) -> Result<ModelParams> {
        match &self.params {
            Some(path) => ModelParams::load(path),
            None => {
                let heads = if self.heads == 0 {
                    ModelParams::default_heads(self.model_n)
                } else {
                    self.heads
                };
                ModelParams::init(self.model_n, self.model_m, heads, self.init_seed)
            }
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Devignette (optional) and crop-align a raw plenoptic image.
    Preprocess {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Cutting size d (even, >= ceil(sqrt(2) m R)).
        #[arg(long)]
        d: u32,
        /// White image for devignetting.
        #[arg(long)]
        white: Option<PathBuf>,
        /// Divisor floor as a fraction of the white maximum.
        #[arg(long, default_value_t = 0.05)]
        devignette_floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a V x V sub-aperture view grid.
    Render {
        /// Preprocessed image (with sidecar), or raw image with --raw.
        #[arg(long)]
        input: PathBuf,
        /// Treat the input as a raw sensor image.
        #[arg(long)]
        raw: bool,
        /// Camera spec (raw input only).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Routing crop size (raw input only).
        #[arg(long)]
        d: Option<u32>,
        #[command(flatten)]
        render: RenderFlags,
        /// Output directory for view_{i}_{j}.png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a preprocessed image into a bitstream.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, default_value_t = 3)]
        lambda_index: u8,
        /// Patch size (multiple of 64, up to 384). Input is zero-padded
        /// to a multiple of this.
        #[arg(long, default_value_t = 384)]
        patch_size: u32,
        /// Also write the (possibly seeded) parameters to this file.
        #[arg(long)]
        save_params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a bitstream back to the preprocessed layout.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        /// Camera spec to attach to the output sidecar.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full evaluation flow: reference views from the original, test
    /// views from the decoded image, one RD point appended to a CSV.
    Metrics {
        /// Original raw plenoptic image.
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Crop size used to route the original through preprocessing for
        /// reference rendering (defaults to the bitstream d).
        #[arg(long)]
        route_d: Option<u32>,
        /// Decoded preprocessed-layout image.
        #[arg(long)]
        decoded: PathBuf,
        /// Bitstream the decoded image came from (bit count source).
        #[arg(long)]
        bitstream: PathBuf,
        #[command(flatten)]
        render: RenderFlags,
        /// Curve label for the CSV row.
        #[arg(long, default_value = "run")]
        label: String,
        /// CSV to append to (created with a header when missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Bjontegaard rate delta between two RD curve CSVs.
    Bdrate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Quality axis: psnr|ms_ssim.
        #[arg(long, default_value = "psnr")]
        axis: String,
    },
    /// Generate a synthetic raw plenoptic image.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// constant|gradient|textured
        #[arg(long, default_value = "textured")]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parallax in pixels per microimage grid index.
        #[arg(long, default_value_t = 1.0)]
        parallax: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        /// gdn|attention|rd_loss|all
        #[arg(long, default_value = "all")]
        target: String,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Preprocess { spec, input, d, white, devignette_floor, out } => {
            let spec = CameraSpec::load(&spec)?;
            let mut raw = RasterImage::load(&input)?;
            if let Some(white_path) = white {
                let white = RasterImage::load(&white_path)?;
                raw = devignette(&raw, &white, devignette_floor)?;
            }
            let pre = crop_and_align(&raw, &spec, d)?;
            pre.save(&out)?;
            println!(
                "preprocessed {}x{} -> {}x{} (d = {}, {}x{} tiles)",
                raw.width, raw.height, pre.image.width, pre.image.height, d, pre.grid_cols, pre.grid_rows
            );
            Ok(())
        }
        Command::Render { input, raw, spec, d, render, out } => {
            let cfg = render.to_config()?;
            let grid = if raw {
                let spec_path = spec.ok_or_else(|| Error::input("--raw requires --spec"))?;
                let d = d.ok_or_else(|| Error::input("--raw requires --d"))?;
                let spec = CameraSpec::load(&spec_path)?;
                let img = RasterImage::load(&input)?;
                render_views_raw(&img, &spec, d, &cfg)?
            } else {
                let pre = PreprocessedImage::load(&input)?;
                render_views(&pre, &cfg)?
            };
            grid.save_dir(&out)?;
            println!(
                "rendered {}x{} views of {}x{} to {}",
                cfg.views_per_side,
                cfg.views_per_side,
                grid.view(0, 0).width,
                grid.view(0, 0).height,
                out.display()
            );
            Ok(())
        }
        Command::Encode { input, model, lambda_index, patch_size, save_params, out } => {
            let pre = PreprocessedImage::load(&input)?;
            let params = model.load()?;
            if let Some(p) = save_params {
                params.save(&p)?;
            }
            let cfg = CodecConfig { lambda_index, patch_size };
            let bs = encode_image(&pre, &params, &cfg)?;
            bs.save(&out)?;
            let bits = bs.total_bits();
            println!(
                "encoded {} patches, {} bytes, {:.4} bpp (sensor {}x{})",
                bs.header.patch_count,
                bits / 8,
                bpp(bits, &pre.spec),
                pre.spec.sensor_width,
                pre.spec.sensor_height
            );
            Ok(())
        }
        Command::Decode { input, model, spec, out } => {
            let bs = Bitstream::load(&input)?;
            let params = model.load()?;
            let img = decode_image(&bs, &params)?;
            match spec {
                Some(spec_path) => {
                    let spec = CameraSpec::load(&spec_path)?;
                    check_layout(&bs, &spec)?;
                    let pre = PreprocessedImage {
                        image: img,
                        crop_size_d: u32::from(bs.header.d),
                        grid_rows: u32::from(bs.header.grid_rows),
                        grid_cols: u32::from(bs.header.grid_cols),
                        spec,
                    };
                    pre.save(&out)?;
                }
                None => img.save(&out)?,
            }
            println!(
                "decoded {}x{} image from {} patches",
                bs.header.width, bs.header.height, bs.header.patch_count
            );
            Ok(())
        }
        Command::Metrics {
            original,
            spec,
            route_d,
            decoded,
            bitstream,
            render,
            label,
            out,
        } => {
            let spec = CameraSpec::load(&spec)?;
            let cfg = render.to_config()?;
            let bs = Bitstream::load(&bitstream)?;
            check_layout(&bs, &spec)?;
            let route_d = route_d.unwrap_or(u32::from(bs.header.d));
            let original = RasterImage::load(&original)?;
            let reference = render_views_raw(&original, &spec, route_d, &cfg)?;
            let decoded_img = RasterImage::load(&decoded)?;
            let pre = PreprocessedImage {
                image: decoded_img,
                crop_size_d: u32::from(bs.header.d),
                grid_rows: u32::from(bs.header.grid_rows),
                grid_cols: u32::from(bs.header.grid_cols),
                spec: spec.clone(),
            };
            if pre.image.width != pre.grid_cols * pre.crop_size_d
                || pre.image.height != pre.grid_rows * pre.crop_size_d
            {
                return Err(Error::input("decoded image does not match the bitstream layout"));
            }
            let test = render_views(&pre, &cfg)?;
            let v2 = f64::from(cfg.views_per_side * cfg.views_per_side);
            let mut psnr_sum = 0.0;
            let mut msssim_sum = 0.0;
            let mut psnr_inf = true;
            for i in 0..cfg.views_per_side {
                for j in 0..cfg.views_per_side {
                    let p = psnr(reference.view(i, j), test.view(i, j))?;
                    if p.is_finite() {
                        psnr_inf = false;
                        psnr_sum += p;
                    }
                    msssim_sum += ms_ssim(reference.view(i, j), test.view(i, j))?;
                }
            }
            let point = RdPoint {
                bpp: bpp(bs.total_bits(), &spec),
                psnr: if psnr_inf { f64::INFINITY } else { psnr_sum / v2 },
                ms_ssim: msssim_sum / v2,
            };
            append_csv_row(&out, &label, &point)?;
            println!(
                "{label}: bpp {:.6}, view-avg PSNR {}, view-avg MS-SSIM {:.6}",
                point.bpp,
                if point.psnr.is_finite() { format!("{:.4} dB", point.psnr) } else { "inf".into() },
                point.ms_ssim
            );
            Ok(())
        }
        Command::Bdrate { reference, test, axis } => {
            let axis: QualityAxis = axis.parse().map_err(Error::Input)?;
            let ref_curves = RdCurve::load(&reference)?;
            let test_curves = RdCurve::load(&test)?;
            let r = ref_curves.first().ok_or_else(|| Error::input("reference CSV has no curves"))?;
            let t = test_curves.first().ok_or_else(|| Error::input("test CSV has no curves"))?;
            let res = bd_rate(r, t, axis)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            println!("{:+.2}%", res.percent);
            Ok(())
        }
        Command::Synth { spec, scene, seed, parallax, out } => {
            let spec = CameraSpec::load(&spec)?;
            let scene: SynthScene = scene.parse().map_err(Error::Input)?;
            let img = synth_plenoptic(scene, &spec, seed, parallax)?;
            img.save(&out)?;
            println!("synthesized {}x{} raw plenoptic image", img.width, img.height);
            Ok(())
        }
        Command::Gradcheck { target, probes, seed } => {
            let targets: Vec<GradTarget> = if target == "all" {
                vec![GradTarget::Gdn, GradTarget::GlobalAttention, GradTarget::RdLossToyModel]
            } else {
                vec![target.parse().map_err(Error::Input)?]
            };
            let mut worst = 0.0f64;
            for t in targets {
                let r = grad_check(t, probes, seed)?;
                println!("{t:?}: max relative error {:.3e} over {} probes", r.max_rel_err, r.probes);
                worst = worst.max(r.max_rel_err);
            }
            if worst > 1e-4 {
                return Err(Error::input(format!(
                    "gradient check failed: max relative error {worst:.3e} > 1e-4"
                )));
            }
            println!("gradients verified (tolerance 1e-4)");
            Ok(())
        }
    }
}

fn check_layout(bs: &Bitstream, spec: &CameraSpec) -> Result<()> {
    if u32::from(bs.header.grid_rows) != spec.complete_rows
        || u32::from(bs.header.grid_cols) != spec.complete_cols
    {
        return Err(Error::input(format!(
            "bitstream grid {}x{} does not match spec {}x{}",
            bs.header.grid_cols, bs.header.grid_rows, spec.complete_cols, spec.complete_rows
        )));
    }
    Ok(())
}

fn append_csv_row(path: &std::path::Path, label: &str, p: &RdPoint) -> Result<()> {
    use std::io::Write;
    let exists = path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if !exists {
        writeln!(f, "label,bpp,psnr,ms_ssim")?;
    }
    writeln!(f, "{label},{},{},{}", p.bpp, p.psnr, p.ms_ssim)?;
    Ok(())
}

/// Exit-code mapping: 2 usage (clap), 3 contract violation, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Image(_) => 4,
        _ => 3,
    }
}
