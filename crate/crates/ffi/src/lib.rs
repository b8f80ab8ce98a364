//! C interface to poachmap.
//!
//! Objects cross the boundary as opaque handles created by `pm_*_parse`,
//! `pm_*_build` or `pm_*_load` and released with the matching `pm_*_free`.
//! Every function returns a [`PmStatus`]; on failure the message is
//! available from [`pm_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use poachmap::evaluation::r2;
use poachmap::features::build_feature_grid;
use poachmap::geometry::{exact_distance_transform, BooleanGrid};
use poachmap::heatmap::generate_heatmap_for;
use poachmap::landcover::{parse_ascii_grid, ClassMap};
use poachmap::models::{deserialize, FittedModel};
use poachmap::{Error, FeatureGrid, LandCoverGrid, N_FEATURES};

/// Result codes. `PM_STATUS_OK` is zero; the rest mirror the command-line exit
/// codes where one applies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    Io = 1,
    Invalid = 2,
    Model = 3,
    NullPointer = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Parsed land-cover raster.
pub struct PmLandCover(LandCoverGrid);

/// Feature grid `V`, row-major, five features per cell.
pub struct PmFeatureGrid(FeatureGrid);

/// Trained model with its scaler.
pub struct PmModel(FittedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: PmStatus, msg: impl Into<String>) -> PmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> PmStatus {
    let status = match e.exit_code() {
        1 => PmStatus::Io,
        3 => PmStatus::Model,
        _ => PmStatus::Invalid,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> PmStatus) -> PmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(PmStatus::Panic, "internal panic"),
    }
}

unsafe fn utf8<'a>(s: *const c_char) -> Result<&'a str, PmStatus> {
    if s.is_null() {
        return Err(fail(PmStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(PmStatus::Invalid, "string is not UTF-8"))
}

unsafe fn handle<'a, T>(h: *const T) -> Result<&'a T, PmStatus> {
    h.as_ref().ok_or_else(|| fail(PmStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, PmStatus> {
    p.as_mut().ok_or_else(|| fail(PmStatus::NullPointer, "null output pointer"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an ESRI ASCII grid held in `text` using the WorldCover class map.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_grid` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_landcover_parse(text: *const c_char, strict: bool, out_grid: *mut *mut PmLandCover) -> PmStatus {
    guard(|| {
        let dst = tri!(out(out_grid));
        let src = tri!(utf8(text));
        match parse_ascii_grid(src, ClassMap::worldcover(), strict) {
            Ok(g) => {
                *dst = Box::into_raw(Box::new(PmLandCover(g)));
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `grid` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_landcover_dims(grid: *const PmLandCover, rows: *mut usize, cols: *mut usize) -> PmStatus {
    guard(|| {
        let g = tri!(handle(grid));
        *tri!(out(rows)) = g.0.n_rows();
        *tri!(out(cols)) = g.0.n_cols();
        PmStatus::Ok
    })
}

/// Semantic class of a pixel: 0 built-up, 1 trees, 2 grass, 3 wetland,
/// 4 other.
///
/// # Safety
/// `grid` must be a live handle and `class_out` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_landcover_class_at(
    grid: *const PmLandCover,
    row: usize,
    col: usize,
    class_out: *mut u8,
) -> PmStatus {
    guard(|| {
        let g = tri!(handle(grid));
        let dst = tri!(out(class_out));
        match g.0.class_of(row, col) {
            Ok(c) => {
                *dst = c as u8;
                PmStatus::Ok
            }
            Err(e) => fail(PmStatus::OutOfRange, e.to_string()),
        }
    })
}

/// # Safety
/// `grid` must come from [`pm_landcover_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pm_landcover_free(grid: *mut PmLandCover) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Builds the feature grid for window size `g`.
///
/// # Safety
/// `grid` must be a live handle and `out_features` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_features_build(
    grid: *const PmLandCover,
    g: usize,
    out_features: *mut *mut PmFeatureGrid,
) -> PmStatus {
    guard(|| {
        let src = tri!(handle(grid));
        let dst = tri!(out(out_features));
        match build_feature_grid(&src.0, g) {
            Ok(v) => {
                *dst = Box::into_raw(Box::new(PmFeatureGrid(v)));
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `features` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_features_dims(features: *const PmFeatureGrid, rows: *mut usize, cols: *mut usize) -> PmStatus {
    guard(|| {
        let v = tri!(handle(features));
        *tri!(out(rows)) = v.0.n_rows();
        *tri!(out(cols)) = v.0.n_cols();
        PmStatus::Ok
    })
}

/// Copies `[a_h, a_t, a_g, d_f, d_w]` of cell `(i, j)` into `out5`.
///
/// # Safety
/// `features` must be a live handle and `out5` point to five doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_features_at(features: *const PmFeatureGrid, i: usize, j: usize, out5: *mut f64) -> PmStatus {
    guard(|| {
        let v = tri!(handle(features));
        if out5.is_null() {
            return fail(PmStatus::NullPointer, "null output pointer");
        }
        match v.0.feature_at(i, j) {
            Ok(f) => {
                ptr::copy_nonoverlapping(f.to_array().as_ptr(), out5, N_FEATURES);
                PmStatus::Ok
            }
            Err(e) => fail(PmStatus::OutOfRange, e.to_string()),
        }
    })
}

/// # Safety
/// `features` must come from [`pm_features_build`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pm_features_free(features: *mut PmFeatureGrid) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Exact Euclidean distance from each cell of a row-major `rows x cols`
/// mask (nonzero = set) to the nearest set cell. With no set cell every
/// output is the grid diagonal.
///
/// # Safety
/// `mask` and `out_distances` must each hold `rows * cols` elements.
#[no_mangle]
pub unsafe extern "C" fn pm_distance_transform(
    mask: *const u8,
    rows: usize,
    cols: usize,
    out_distances: *mut f64,
) -> PmStatus {
    guard(|| {
        if mask.is_null() || out_distances.is_null() {
            return fail(PmStatus::NullPointer, "null buffer");
        }
        let Some(n) = rows.checked_mul(cols) else {
            return fail(PmStatus::Invalid, "grid size overflows");
        };
        let bits = std::slice::from_raw_parts(mask, n).iter().map(|&b| b != 0).collect();
        match BooleanGrid::new(rows, cols, bits) {
            Ok(grid) => {
                let d = exact_distance_transform(&grid);
                ptr::copy_nonoverlapping(d.values.as_ptr(), out_distances, n);
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Parses a model file held in `text`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn pm_model_load(text: *const c_char, out_model: *mut *mut PmModel) -> PmStatus {
    guard(|| {
        let dst = tri!(out(out_model));
        let src = tri!(utf8(text));
        match deserialize(src) {
            Ok(m) => {
                *dst = Box::into_raw(Box::new(PmModel(m)));
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Predicts one raw (unscaled) feature row; the stored scaler is applied.
///
/// # Safety
/// `model` must be a live handle, `x5` point to five doubles and `y` be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_model_predict(model: *const PmModel, x5: *const f64, y: *mut f64) -> PmStatus {
    guard(|| {
        let m = tri!(handle(model));
        let dst = tri!(out(y));
        if x5.is_null() {
            return fail(PmStatus::NullPointer, "null input row");
        }
        let mut row = [0.0; N_FEATURES];
        ptr::copy_nonoverlapping(x5, row.as_mut_ptr(), N_FEATURES);
        *dst = m.0.predict(&row);
        PmStatus::Ok
    })
}

/// # Safety
/// `model` must come from [`pm_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pm_model_free(model: *mut PmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the clamped probability of every cell of `features`, row-major,
/// into `out_values`. `capacity` is the buffer length in doubles.
///
/// # Safety
/// Both handles must be live and `out_values` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_heatmap_generate(
    model: *const PmModel,
    features: *const PmFeatureGrid,
    out_values: *mut f64,
    capacity: usize,
) -> PmStatus {
    guard(|| {
        let m = tri!(handle(model));
        let v = tri!(handle(features));
        if out_values.is_null() {
            return fail(PmStatus::NullPointer, "null output buffer");
        }
        if capacity < v.0.len() {
            return fail(PmStatus::BufferTooSmall, format!("need {} values, got {capacity}", v.0.len()));
        }
        match generate_heatmap_for(&m.0, &v.0) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.values().as_ptr(), out_values, p.values().len());
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Coefficient of determination of `predictions` against `targets`.
///
/// # Safety
/// Both arrays must hold `n` doubles and `out_r2` be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_r2(predictions: *const f64, targets: *const f64, n: usize, out_r2: *mut f64) -> PmStatus {
    guard(|| {
        if predictions.is_null() || targets.is_null() {
            return fail(PmStatus::NullPointer, "null buffer");
        }
        let dst = tri!(out(out_r2));
        let p = std::slice::from_raw_parts(predictions, n);
        let t = std::slice::from_raw_parts(targets, n);
        match r2(p, t) {
            Ok(v) => {
                *dst = v;
                PmStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}
