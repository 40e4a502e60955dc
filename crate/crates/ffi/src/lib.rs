//! C ABI over the `seele` renderer.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_open`/
//! `*_load_*` functions and destroyed by the matching `*_free`. Every fallible
//! call returns a [`SeeleStatus`]; on failure a message for the calling thread
//! is available from [`seele_last_error_message`]. Panics never unwind into
//! the caller: they are reported as [`SeeleStatus::Panic`].
//!
//! Images are written as interleaved linear RGB `float`s, row-major,
//! `width * height * 3` values, before any clamping or quantization.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use seele::io::container::ClusteredSceneStore;
use seele::io::ply::{load_ply, SceneFile};
use seele::residency::{ResidencyConfig, ResidentRenderer};
use seele::{CameraPose, Engine, Error, FrameStats, Image, RenderConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeeleStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Schema = 3,
    Data = 4,
    Corruption = 5,
    Contract = 6,
    Panic = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
}

/// A loaded PLY scene.
pub struct SeeleScene {
    file: SceneFile,
}

/// An opened clustered scene directory; chunks load lazily.
pub struct SeeleClustered {
    store: Arc<ClusteredSceneStore>,
}

/// Streaming renderer over a clustered scene, with its own loader thread.
pub struct SeeleResidency {
    renderer: ResidentRenderer,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SeeleCamera {
    pub position: [f64; 3],
    /// Unit quaternion (w, x, y, z) rotating camera axes into the world; the
    /// camera looks down its +z axis with +y pointing down the image.
    pub orientation_wxyz: [f64; 4],
    pub fov_x: f64,
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

pub const SEELE_ENGINE_REFERENCE: u32 = 0;
pub const SEELE_ENGINE_CONTRIBUTION_AWARE: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SeeleRenderOptions {
    /// `SEELE_ENGINE_REFERENCE` or `SEELE_ENGINE_CONTRIBUTION_AWARE`.
    pub engine: u32,
    /// Pixel group width for the contribution-aware engine: 1, 2 or 4.
    pub group_w: u32,
    pub background: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SeeleFrameStats {
    pub gaussians_in: u64,
    pub culled: u64,
    pub degenerate: u64,
    pub tile_pairs: u64,
    pub pixel_alpha_evals: u64,
    pub pixel_blends: u64,
    pub alpha_eval_steps: u64,
    pub blend_steps: u64,
    pub leader_eval_steps: u64,
    pub warp_steps: u64,
    pub resident_bytes: u64,
    pub stalls: u64,
    pub prefetch_hits: u64,
}

impl From<&FrameStats> for SeeleFrameStats {
    fn from(s: &FrameStats) -> Self {
        Self {
            gaussians_in: s.gaussians_in,
            culled: s.culled,
            degenerate: s.degenerate,
            tile_pairs: s.tile_pairs,
            pixel_alpha_evals: s.pixel_alpha_evals,
            pixel_blends: s.pixel_blends,
            alpha_eval_steps: s.warp.alpha_eval_steps,
            blend_steps: s.warp.blend_steps,
            leader_eval_steps: s.warp.leader_eval_steps,
            warp_steps: s.warp.warp_steps,
            resident_bytes: s.resident_bytes,
            stalls: s.stalls,
            prefetch_hits: s.prefetch_hits,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SeeleStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => SeeleStatus::InvalidArgument,
            Error::Schema { .. } => SeeleStatus::Schema,
            Error::Data { .. } => SeeleStatus::Data,
            Error::Corruption { .. } => SeeleStatus::Corruption,
            Error::Io { .. } => SeeleStatus::Io,
            Error::Contract(_) => SeeleStatus::Contract,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SeeleStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, mapping errors and panics to a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SeeleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeeleStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SeeleStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SeeleStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn camera_arg(c: &SeeleCamera) -> Result<CameraPose, Failure> {
    Ok(CameraPose::new(
        c.position,
        c.orientation_wxyz,
        c.fov_x,
        c.fov_y,
        c.width,
        c.height,
    )?)
}

fn options_arg(o: Option<&SeeleRenderOptions>) -> Result<RenderConfig, Failure> {
    let Some(o) = o else {
        return Ok(RenderConfig::default());
    };
    let engine = match o.engine {
        SEELE_ENGINE_REFERENCE => Engine::Reference,
        SEELE_ENGINE_CONTRIBUTION_AWARE if matches!(o.group_w, 1 | 2 | 4) => {
            Engine::ContributionAware { group_w: o.group_w }
        }
        SEELE_ENGINE_CONTRIBUTION_AWARE => {
            return Err(Failure(SeeleStatus::InvalidArgument, format!("group width {} not in {{1, 2, 4}}", o.group_w)))
        }
        e => return Err(Failure(SeeleStatus::InvalidArgument, format!("unknown engine {e}"))),
    };
    Ok(RenderConfig {
        engine,
        background: o.background,
        ..RenderConfig::default()
    })
}

unsafe fn write_output(
    img: &Image,
    stats: &FrameStats,
    out_rgb: *mut f32,
    out_len: usize,
    out_stats: *mut SeeleFrameStats,
) -> Result<(), Failure> {
    let needed = img.pixels.len() * 3;
    if out_len < needed {
        return Err(Failure(
            SeeleStatus::BufferTooSmall,
            format!("output buffer holds {out_len} floats, {needed} needed"),
        ));
    }
    let out = std::slice::from_raw_parts_mut(out_rgb, needed);
    for (dst, px) in out.chunks_exact_mut(3).zip(&img.pixels) {
        for c in 0..3 {
            dst[c] = px[c] as f32;
        }
    }
    if !out_stats.is_null() {
        *out_stats = SeeleFrameStats::from(stats);
    }
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length including the NUL, or
/// 0 when there is no message. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn seele_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seele_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seele_scene_load_ply(path: *const c_char, out: *mut *mut SeeleScene) -> SeeleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let file = load_ply(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SeeleScene { file }));
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle from [`seele_scene_load_ply`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seele_scene_free(scene: *mut SeeleScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of gaussians, 0 for a null handle.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seele_scene_len(scene: *const SeeleScene) -> usize {
    scene.as_ref().map_or(0, |s| s.file.gaussians.len())
}

/// Renders one frame of a flat scene. `options` may be null for defaults;
/// `out_stats` may be null.
///
/// # Safety
/// Handles and pointers must be valid; `out_rgb` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn seele_render(
    scene: *const SeeleScene,
    camera: *const SeeleCamera,
    options: *const SeeleRenderOptions,
    out_rgb: *mut f32,
    out_len: usize,
    out_stats: *mut SeeleFrameStats,
) -> SeeleStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        let cam = camera_arg(camera.as_ref().ok_or_else(|| null("camera"))?)?;
        if out_rgb.is_null() {
            return Err(null("out_rgb"));
        }
        let cfg = options_arg(options.as_ref())?;
        let (img, stats) = seele::render(&scene.file.gaussians, &cam, scene.file.sh_degree, &cfg)?;
        write_output(&img, &stats, out_rgb, out_len, out_stats)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seele_clustered_open(path: *const c_char, out: *mut *mut SeeleClustered) -> SeeleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let store = ClusteredSceneStore::open(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SeeleClustered { store: Arc::new(store) }));
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a live handle. Residency handles created from it
/// keep their own reference and stay valid.
#[no_mangle]
pub unsafe extern "C" fn seele_clustered_free(scene: *mut SeeleClustered) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seele_clustered_num_clusters(scene: *const SeeleClustered) -> usize {
    scene.as_ref().map_or(0, |s| s.store.manifest().num_clusters)
}

/// Creates a streaming renderer keeping the nearest cluster and `m`
/// neighbors resident. `prefetch` = 0 disables the background loader.
///
/// # Safety
/// `scene` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seele_residency_new(
    scene: *const SeeleClustered,
    m: usize,
    prefetch: u8,
    out: *mut *mut SeeleResidency,
) -> SeeleStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let renderer = ResidentRenderer::new(
            Arc::clone(&scene.store),
            ResidencyConfig {
                m,
                prefetch: prefetch != 0,
                ..ResidencyConfig::default()
            },
        )?;
        *out = Box::into_raw(Box::new(SeeleResidency { renderer }));
        Ok(())
    })
}

/// Renders the next frame of a trajectory.
///
/// # Safety
/// As [`seele_render`]; `residency` must not be used from two threads at once.
#[no_mangle]
pub unsafe extern "C" fn seele_residency_render_frame(
    residency: *mut SeeleResidency,
    camera: *const SeeleCamera,
    options: *const SeeleRenderOptions,
    out_rgb: *mut f32,
    out_len: usize,
    out_stats: *mut SeeleFrameStats,
) -> SeeleStatus {
    guard(|| {
        let r = residency.as_mut().ok_or_else(|| null("residency"))?;
        let cam = camera_arg(camera.as_ref().ok_or_else(|| null("camera"))?)?;
        if out_rgb.is_null() {
            return Err(null("out_rgb"));
        }
        let cfg = options_arg(options.as_ref())?;
        let (img, stats) = r.renderer.render_frame(&cam, &cfg)?;
        write_output(&img, &stats, out_rgb, out_len, out_stats)
    })
}

/// Peak committed bytes so far, 0 for a null handle.
///
/// # Safety
/// `residency` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn seele_residency_peak_bytes(residency: *const SeeleResidency) -> u64 {
    residency.as_ref().map_or(0, |r| r.renderer.state().peak_resident_bytes)
}

/// # Safety
/// `residency` must be null or a live handle. Joins the loader thread.
#[no_mangle]
pub unsafe extern "C" fn seele_residency_free(residency: *mut SeeleResidency) {
    if !residency.is_null() {
        drop(Box::from_raw(residency));
    }
}

/// PSNR in dB between two RGB float buffers of `len` values each; writes
/// `INFINITY` for identical buffers.
///
/// # Safety
/// `a` and `b` must hold `len` floats; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn seele_psnr(a: *const f32, b: *const f32, len: usize, out: *mut f64) -> SeeleStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        if len == 0 || len % 3 != 0 {
            return Err(Failure(SeeleStatus::InvalidArgument, "length must be a positive multiple of 3".into()));
        }
        let to_image = |p: *const f32| {
            let s = std::slice::from_raw_parts(p, len);
            Image {
                width: (len / 3) as u32,
                height: 1,
                pixels: s
                    .chunks_exact(3)
                    .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
                    .collect(),
            }
        };
        *out = seele::metrics::psnr(&to_image(a), &to_image(b))?;
        Ok(())
    })
}
