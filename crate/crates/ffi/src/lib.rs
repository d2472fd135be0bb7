//! C interface: opaque tree and measure handles, status codes, and a
//! per-thread error message.
//!
//! Every function returns an [`FmStatus`] and writes results through out
//! pointers. On failure, [`fm_last_error`] describes the cause. Handles are
//! released with their `*_free` function; passing null to it is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use frostman::cube::DyadicCube;
use frostman::estimate::{
    box_dimension, default_window, dyadic_dimension, intermediate_dim_at_scale, level_counts, lower_dimension,
    EstimateError,
};
use frostman::format::{load_tree, save_tree, FormatError};
use frostman::frostman::{construct, Construction, FrostmanError};
use frostman::sets::{realize, SetError, SetSpec};
use frostman::tree::{build_from_points, OccupancyTree, TreeError};
use frostman::verify::{ball_mass, VerifyError};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Malformed input: bad spec, bad points, bad file, out-of-range argument.
    InvalidArgument = 2,
    /// Parameters that the tree cannot support, such as a scale finer than
    /// its depth or `s > t`.
    Infeasible = 3,
    /// A count does not fit in 64 bits.
    Overflow = 4,
    /// A bug: the library panicked or hit an internal inconsistency.
    Internal = 5,
}

/// Occupancy tree of a set, realized to a fixed depth.
pub struct FmTree(Arc<OccupancyTree>);

/// Normalized cascade measure with its equality cover.
pub struct FmMeasure(Construction);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(FmStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(FmStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(FmStatus::InvalidArgument, msg.into())
    }
}

impl From<SetError> for Failure {
    fn from(e: SetError) -> Self {
        match e {
            SetError::Tree(TreeError::Budget(_)) => Failure(FmStatus::Infeasible, e.to_string()),
            e => Failure::invalid(e.to_string()),
        }
    }
}

impl From<TreeError> for Failure {
    fn from(e: TreeError) -> Self {
        SetError::Tree(e).into()
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<EstimateError> for Failure {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Parameter(_) => Failure::invalid(e.to_string()),
            e => Failure(FmStatus::Infeasible, e.to_string()),
        }
    }
}

impl From<FrostmanError> for Failure {
    fn from(e: FrostmanError) -> Self {
        match e {
            FrostmanError::TooDeep { .. } | FrostmanError::DimensionMismatch { .. } => Failure::invalid(e.to_string()),
            e => Failure(FmStatus::Infeasible, e.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Frostman(f) => f.into(),
            e => Failure::invalid(e.to_string()),
        }
    }
}

/// Runs `f`, records any failure or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            FmStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Realizes a set spec (TOML text) to depth `max_level`.
///
/// # Safety
/// `spec_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_from_spec(spec_toml: *const c_char, max_level: u32, out: *mut *mut FmTree) -> FmStatus {
    guard(|| {
        let text = str_arg(spec_toml, "spec_toml")?;
        let spec = SetSpec::from_toml(text)?;
        let tree = realize(&spec, max_level)?;
        put(out, Box::into_raw(Box::new(FmTree(Arc::new(tree)))), "out")
    })
}

/// Builds the tree of cubes containing `count` points of dimension `dim`,
/// stored row-major in `coords` with coordinates in `[0,1)`.
///
/// # Safety
/// `coords` must point to `count * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_from_points(
    coords: *const f64,
    count: usize,
    dim: usize,
    max_level: u32,
    out: *mut *mut FmTree,
) -> FmStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure::invalid("dimension must be positive"));
        }
        let len = count.checked_mul(dim).ok_or_else(|| Failure::invalid("count * dim overflows"))?;
        let flat = slice_arg(coords, len, "coords")?;
        let points: Vec<&[f64]> = flat.chunks_exact(dim).collect();
        let tree = build_from_points(&points, dim, max_level)?;
        put(out, Box::into_raw(Box::new(FmTree(Arc::new(tree)))), "out")
    })
}

/// Reads a tree file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_load(path: *const c_char, out: *mut *mut FmTree) -> FmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let tree = load_tree(Path::new(path))?;
        put(out, Box::into_raw(Box::new(FmTree(Arc::new(tree)))), "out")
    })
}

/// Writes a tree file.
///
/// # Safety
/// `tree` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_save(tree: *const FmTree, path: *const c_char) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let path = str_arg(path, "path")?;
        save_tree(&tree.0, Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_free(tree: *mut FmTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Ambient dimension and depth of a tree.
///
/// # Safety
/// `tree` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_shape(tree: *const FmTree, dim: *mut usize, max_level: *mut u32) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        put(dim, tree.0.dim(), "dim")?;
        put(max_level, tree.0.max_level(), "max_level")
    })
}

/// Number of occupied cubes at `level`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tree_occupied_count(tree: *const FmTree, level: u32, out: *mut u64) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        if level > tree.0.max_level() {
            return Err(Failure::invalid(format!("level {level} exceeds max level {}", tree.0.max_level())));
        }
        let count = tree.0.occupied_count(level);
        let count = u64::try_from(count)
            .map_err(|_| Failure(FmStatus::Overflow, format!("{count} cubes at level {level} exceed 64 bits")))?;
        put(out, count, "out")
    })
}

/// Dyadic dimension: minimum of `log2 N_n` over `burn_in..max_level`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_dyadic_dimension(tree: *const FmTree, burn_in: u32, out: *mut f64) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let d = dyadic_dimension(&level_counts(&tree.0), burn_in)?;
        put(out, d.estimate, "out")
    })
}

/// Box-counting slope over levels `lo..=hi`, with its RMS residual.
///
/// # Safety
/// `tree` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_box_dimension(
    tree: *const FmTree,
    lo: u32,
    hi: u32,
    slope: *mut f64,
    residual: *mut f64,
) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let fit = box_dimension(&level_counts(&tree.0), lo, hi)?;
        put(slope, fit.slope, "slope")?;
        put(residual, fit.residual, "residual")
    })
}

/// Lower dimension over the default level window starting at `burn_in`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_lower_dimension(tree: *const FmTree, burn_in: u32, out: *mut f64) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let l = lower_dimension(&tree.0, &default_window(tree.0.max_level(), burn_in))?;
        put(out, l.estimate, "out")
    })
}

/// Intermediate dimension estimate at scale `delta` for `theta`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_intermediate_dimension(
    tree: *const FmTree,
    theta: f64,
    delta: f64,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let e = intermediate_dim_at_scale(&tree.0, theta, delta)?;
        put(out, e.s, "out")
    })
}

/// Constructs the normalized `(delta, s, t)` cascade measure on `tree`. The
/// measure keeps its own reference to the tree, which may be freed first.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_construct(
    tree: *const FmTree,
    theta: f64,
    delta: f64,
    s: f64,
    t: f64,
    out: *mut *mut FmMeasure,
) -> FmStatus {
    guard(|| {
        let tree = handle(tree, "tree")?;
        let c = construct(Arc::clone(&tree.0), theta, delta, s, t)?;
        put(out, Box::into_raw(Box::new(FmMeasure(c))), "out")
    })
}

/// # Safety
/// `measure` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_measure_free(measure: *mut FmMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Unnormalized total mass `T`, the fine level `m`, the top level `L`, and
/// the number of equality-cover cubes.
///
/// # Safety
/// `measure` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_measure_summary(
    measure: *const FmMeasure,
    total: *mut f64,
    m: *mut u32,
    top: *mut u32,
    cover_size: *mut u64,
) -> FmStatus {
    guard(|| {
        let c = &handle(measure, "measure")?.0;
        let len = c.cover.len();
        let len = u64::try_from(len).map_err(|_| Failure(FmStatus::Overflow, format!("cover of {len} cubes")))?;
        put(total, c.total, "total")?;
        put(m, c.params.m, "m")?;
        put(top, c.params.top, "top")?;
        put(cover_size, len, "cover_size")
    })
}

/// Normalized mass of the cube at `level` with per-axis indices `index`
/// (`dim` entries).
///
/// # Safety
/// `measure` must be a live handle; `index` must point to `dim` integers;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_measure_cube_mass(
    measure: *const FmMeasure,
    level: u32,
    index: *const u64,
    dim: usize,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        let c = &handle(measure, "measure")?.0;
        let index = slice_arg(index, dim, "index")?;
        let cube = DyadicCube::from_index(level, index).map_err(|e| Failure::invalid(e.to_string()))?;
        put(out, c.measure.normalized_mass(&cube)?, "out")
    })
}

/// Normalized mass of the ball of radius `r` around `x` (`dim` entries).
///
/// # Safety
/// `measure` must be a live handle; `x` must point to `dim` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_measure_ball_mass(
    measure: *const FmMeasure,
    x: *const f64,
    dim: usize,
    r: f64,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        let c = &handle(measure, "measure")?.0;
        let x = slice_arg(x, dim, "x")?;
        if dim != c.measure.tree().dim() {
            return Err(Failure::invalid(format!("point has {dim} coordinates, measure has {}", c.measure.tree().dim())));
        }
        put(out, ball_mass(&c.measure, x, r)? / c.total, "out")
    })
}
