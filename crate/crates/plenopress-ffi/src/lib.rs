//! C ABI for the plenopress pipeline.
//!
//! Conventions: opaque handles created and destroyed by this library,
//! UTF-8 NUL-terminated path strings, status codes for every fallible
//! call, and a thread-local message retrievable with
//! `pp_last_error_message` after a non-OK status. All functions are
//! panic-safe: a Rust panic is reported as `PP_STATUS_INTERNAL`.

use libc::c_char;
use plenopress::camera::CameraSpec;
use plenopress::codec::ModelParams;
use plenopress::coder::{decode_image, encode_image, Bitstream, CodecConfig};
use plenopress::error::Error;
use plenopress::preprocess::{crop_and_align, PreprocessedImage};
use plenopress::raster::RasterImage;
use plenopress::synth::{synth_plenoptic, SynthScene};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    /// Success.
    Ok = 0,
    /// A pointer or argument was null, malformed, or out of range.
    InvalidArgument = 1,
    /// Input data violated a contract (bad spec, bad stream, bad image).
    Data = 2,
    /// Filesystem or image I/O failed.
    Io = 3,
    /// Internal failure (panic); report as a bug.
    Internal = 4,
}

/// Opaque camera geometry handle.
pub struct PpCameraSpec(CameraSpec);

/// Opaque codec model handle.
pub struct PpModel(ModelParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PpStatus {
    match e {
        Error::Io(_) | Error::Image(_) => PpStatus::Io,
        _ => PpStatus::Data,
    }
}

fn fail(e: Error) -> PpStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn invalid(msg: &str) -> PpStatus {
    set_error(msg);
    PpStatus::InvalidArgument
}

fn guarded(f: impl FnOnce() -> PpStatus) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            PpStatus::Internal
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated UTF-8 string.
unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, PpStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what}: null pointer")));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(invalid(&format!("{what}: not valid UTF-8"))),
    }
}

fn out_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, PpStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what}: null output pointer")));
    }
    Ok(unsafe { &mut *ptr })
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a camera spec from a key-value config file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_spec_load(path: *const c_char, out: *mut *mut PpCameraSpec) -> PpStatus {
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match CameraSpec::load(path) {
            Ok(spec) => {
                *slot = Box::into_raw(Box::new(PpCameraSpec(spec)));
                PpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The canonical TSPC camera geometry.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_spec_canonical(out: *mut *mut PpCameraSpec) -> PpStatus {
    guarded(|| {
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        *slot = Box::into_raw(Box::new(PpCameraSpec(CameraSpec::tspc())));
        PpStatus::Ok
    })
}

/// # Safety
/// `spec` must come from a `pp_spec_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_spec_free(spec: *mut PpCameraSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Sensor dimensions of a spec.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_spec_sensor_size(
    spec: *const PpCameraSpec,
    width: *mut u32,
    height: *mut u32,
) -> PpStatus {
    guarded(|| {
        if spec.is_null() {
            return invalid("spec: null pointer");
        }
        let (w, h) = match (out_arg(width, "width"), out_arg(height, "height")) {
            (Ok(w), Ok(h)) => (w, h),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let s = &(*spec).0;
        *w = s.sensor_width;
        *h = s.sensor_height;
        PpStatus::Ok
    })
}

/// Minimum lossless cutting size sqrt(2) * m * radius.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_min_crop_size(m: f64, radius: f64, out: *mut f64) -> PpStatus {
    guarded(|| {
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match plenopress::camera::min_crop_size(m, radius) {
            Ok(v) => {
                *slot = v;
                PpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Bits-per-pixel against the spec's sensor resolution.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_bpp(bit_count: u64, spec: *const PpCameraSpec, out: *mut f64) -> PpStatus {
    guarded(|| {
        if spec.is_null() {
            return invalid("spec: null pointer");
        }
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        *slot = plenopress::metrics::bpp(bit_count, &(*spec).0);
        PpStatus::Ok
    })
}

/// Crop-align a raw plenoptic image file into the preprocessed layout
/// (image plus `.meta` sidecar).
///
/// # Safety
/// All pointers must be valid NUL-terminated strings / handles.
#[no_mangle]
pub unsafe extern "C" fn pp_preprocess_file(
    spec: *const PpCameraSpec,
    input: *const c_char,
    d: u32,
    output: *const c_char,
) -> PpStatus {
    guarded(|| {
        if spec.is_null() {
            return invalid("spec: null pointer");
        }
        let (input, output) = match (path_arg(input, "input"), path_arg(output, "output")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let run = || -> plenopress::Result<()> {
            let raw = RasterImage::load(input)?;
            let pre = crop_and_align(&raw, &(*spec).0, d)?;
            pre.save(output)
        };
        match run() {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Render a synthetic raw plenoptic image to a file.
/// `scene` is one of "constant", "gradient", "textured".
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_synth_file(
    spec: *const PpCameraSpec,
    scene: *const c_char,
    seed: u64,
    parallax: f64,
    output: *const c_char,
) -> PpStatus {
    guarded(|| {
        if spec.is_null() {
            return invalid("spec: null pointer");
        }
        let (scene_str, output) = match (path_arg(scene, "scene"), path_arg(output, "output")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let scene: SynthScene = match scene_str.to_str().unwrap_or("").parse() {
            Ok(s) => s,
            Err(msg) => return invalid(&msg),
        };
        let run = || -> plenopress::Result<()> {
            let img = synth_plenoptic(scene, &(*spec).0, seed, parallax)?;
            img.save(output)
        };
        match run() {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Build deterministic seeded model parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_model_init(
    n: u32,
    m: u32,
    heads: u32,
    seed: u64,
    out: *mut *mut PpModel,
) -> PpStatus {
    guarded(|| {
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match ModelParams::init(n as usize, m as usize, heads as usize, seed) {
            Ok(p) => {
                *slot = Box::into_raw(Box::new(PpModel(p)));
                PpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Load model parameters from a file.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_model_load(path: *const c_char, out: *mut *mut PpModel) -> PpStatus {
    guarded(|| {
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match ModelParams::load(path) {
            Ok(p) => {
                *slot = Box::into_raw(Box::new(PpModel(p)));
                PpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must come from a `pp_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_model_free(model: *mut PpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Encode a preprocessed image file (with `.meta` sidecar) into a
/// bitstream file.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_encode_file(
    model: *const PpModel,
    pre_image: *const c_char,
    lambda_index: u8,
    patch_size: u32,
    out_bitstream: *const c_char,
) -> PpStatus {
    guarded(|| {
        if model.is_null() {
            return invalid("model: null pointer");
        }
        let (input, output) = match (path_arg(pre_image, "pre_image"), path_arg(out_bitstream, "out_bitstream")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let run = || -> plenopress::Result<()> {
            let pre = PreprocessedImage::load(input)?;
            let bs = encode_image(&pre, &(*model).0, &CodecConfig { lambda_index, patch_size })?;
            bs.save(output)
        };
        match run() {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Decode a bitstream file back to a preprocessed-layout image file.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_decode_file(
    model: *const PpModel,
    bitstream: *const c_char,
    out_image: *const c_char,
) -> PpStatus {
    guarded(|| {
        if model.is_null() {
            return invalid("model: null pointer");
        }
        let (input, output) = match (path_arg(bitstream, "bitstream"), path_arg(out_image, "out_image")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let run = || -> plenopress::Result<()> {
            let bs = Bitstream::load(input)?;
            let img = decode_image(&bs, &(*model).0)?;
            img.save(output)
        };
        match run() {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// PSNR between two image files, +inf for identical images.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_psnr_files(a: *const c_char, b: *const c_char, out: *mut f64) -> PpStatus {
    guarded(|| {
        let (a, b) = match (path_arg(a, "a"), path_arg(b, "b")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let slot = match out_arg(out, "out") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let run = || -> plenopress::Result<f64> {
            let ia = RasterImage::load(a)?;
            let ib = RasterImage::load(b)?;
            plenopress::metrics::psnr(&ia, &ib)
        };
        match run() {
            Ok(v) => {
                *slot = v;
                PpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn cpath(p: &Path) -> CString {
        CString::new(p.to_str().unwrap()).unwrap()
    }

    #[test]
    fn min_crop_size_values() {
        let mut v = 0.0;
        unsafe {
            assert_eq!(pp_min_crop_size(0.8, 35.0, &mut v), PpStatus::Ok);
            assert!((v - 39.598).abs() < 0.01);
            assert_eq!(pp_min_crop_size(0.0, 35.0, &mut v), PpStatus::Data);
            assert_eq!(pp_min_crop_size(0.8, 35.0, std::ptr::null_mut()), PpStatus::InvalidArgument);
        }
        let msg = unsafe { CStr::from_ptr(pp_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());
    }

    #[test]
    fn canonical_spec_and_bpp() {
        unsafe {
            let mut spec: *mut PpCameraSpec = std::ptr::null_mut();
            assert_eq!(pp_spec_canonical(&mut spec), PpStatus::Ok);
            let (mut w, mut h) = (0u32, 0u32);
            assert_eq!(pp_spec_sensor_size(spec, &mut w, &mut h), PpStatus::Ok);
            assert_eq!((w, h), (4080, 3068));
            let mut v = 0.0;
            assert_eq!(pp_bpp(12_517_440, spec, &mut v), PpStatus::Ok);
            assert!((v - 1.0).abs() < 1e-12);
            pp_spec_free(spec);
        }
    }

    #[test]
    fn file_pipeline_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        // A small camera for a fast end-to-end run.
        let spec = plenopress::camera::CameraSpec {
            sensor_width: 260,
            sensor_height: 280,
            microlens_radius: 35.0,
            epa_coefficient: 0.8,
            origin_x: 70.0,
            origin_y: 70.0,
            hex_horizontal_pitch: 60.0,
            hex_vertical_pitch: 70.0,
            column_offset: 35.0,
            complete_cols: 3,
            complete_rows: 2,
            optics: Default::default(),
        };
        let spec_path = dir.path().join("cam.cfg");
        spec.save(&spec_path).unwrap();

        unsafe {
            let mut handle: *mut PpCameraSpec = std::ptr::null_mut();
            assert_eq!(pp_spec_load(cpath(&spec_path).as_ptr(), &mut handle), PpStatus::Ok);

            let raw = dir.path().join("raw.png");
            assert_eq!(
                pp_synth_file(handle, cpath(Path::new("textured")).as_ptr(), 3, 1.0, cpath(&raw).as_ptr()),
                PpStatus::Ok
            );

            let pre = dir.path().join("pre.png");
            assert_eq!(pp_preprocess_file(handle, cpath(&raw).as_ptr(), 40, cpath(&pre).as_ptr()), PpStatus::Ok);

            let mut model: *mut PpModel = std::ptr::null_mut();
            assert_eq!(pp_model_init(4, 6, 1, 7, &mut model), PpStatus::Ok);

            let bs = dir.path().join("out.fpic");
            assert_eq!(pp_encode_file(model, cpath(&pre).as_ptr(), 2, 64, cpath(&bs).as_ptr()), PpStatus::Ok);

            let dec = dir.path().join("dec.png");
            assert_eq!(pp_decode_file(model, cpath(&bs).as_ptr(), cpath(&dec).as_ptr()), PpStatus::Ok);

            let mut p = 0.0;
            assert_eq!(pp_psnr_files(cpath(&pre).as_ptr(), cpath(&dec).as_ptr(), &mut p), PpStatus::Ok);
            assert!(p > 0.0);

            // error paths
            assert_eq!(
                pp_decode_file(model, cpath(&raw).as_ptr(), cpath(&dec).as_ptr()),
                PpStatus::Data
            );
            let missing = dir.path().join("missing.png");
            assert_eq!(
                pp_preprocess_file(handle, cpath(&missing).as_ptr(), 40, cpath(&pre).as_ptr()),
                PpStatus::Io
            );

            pp_model_free(model);
            pp_spec_free(handle);
        }
    }

    #[test]
    fn version_is_static() {
        let v = unsafe { CStr::from_ptr(pp_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
