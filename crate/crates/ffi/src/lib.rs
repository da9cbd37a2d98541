//! C ABI over `folia`.
//!
//! Models, targets and maps are opaque handles created by `*_new` functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`FoliaStatus`]; on failure the message is available from
//! [`folia_last_error`] on the same thread. Output arrays are caller-owned and
//! their length is passed in and checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use folia::calculus::MapData;
use folia::flow::{flow, FlowConfig, FlowKind};
use folia::manifold::{build_model, build_target, ModelFoliation, ModelSpec, StencilOrder, TargetGeometry};
use folia::section::{MapField, PullbackSection, VariationPath};
use folia::tension::{bitension_of, conservation_residual_of, tension_of};
use folia::variational::{
    assemble_jacobi, bienergy_of, energy_of, fd_first_variation, stability_report, EigenSolver, Functional,
    DEFAULT_STEPS,
};
use folia::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoliaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferSize = 3,
    UnknownModel = 4,
    UnknownTarget = 5,
    InvalidModel = 6,
    ChartDomain = 7,
    NonConvergence = 8,
    FlowAborted = 9,
    Internal = 10,
}

/// Which functional a variation refers to.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoliaFunctional {
    Energy = 0,
    Bienergy = 1,
}

/// Which gradient flow to run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoliaFlow {
    Harmonic = 0,
    Bienergy = 1,
}

/// Discretized source foliation.
pub struct FoliaModel(ModelFoliation);

/// Target surface chart.
pub struct FoliaTarget(TargetGeometry);

/// Map sampled on a model's grid.
pub struct FoliaMap(MapField);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FoliaStatus {
    match e {
        Error::UnknownModel(_) => FoliaStatus::UnknownModel,
        Error::UnknownTarget(_) => FoliaStatus::UnknownTarget,
        Error::InvalidModel(_) => FoliaStatus::InvalidModel,
        Error::ChartDomain { .. } => FoliaStatus::ChartDomain,
        Error::NonConvergence(_) | Error::TooLarge { .. } => FoliaStatus::NonConvergence,
        Error::FlowAborted { .. } => FoliaStatus::FlowAborted,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => FoliaStatus::Internal,
        _ => FoliaStatus::InvalidArgument,
    }
}

struct Fail(FoliaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FoliaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FoliaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FoliaStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FoliaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(FoliaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len != need {
        return Err(Fail(FoliaStatus::BufferSize, format!("{what} has length {len}, expected {need}")));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn section(map: &MapField, values: &[f64]) -> Result<PullbackSection, Fail> {
    if values.len() != map.values.len() {
        return Err(Fail(
            FoliaStatus::BufferSize,
            format!("section has length {}, expected {}", values.len(), map.values.len()),
        ));
    }
    Ok(PullbackSection(values.to_vec()))
}

fn same_grid(model: &ModelFoliation, map: &MapField) -> Result<(), Fail> {
    if map.node_count() != model.node_count() || map.q != model.q() {
        return Err(Fail(FoliaStatus::InvalidArgument, "map was sampled on a different grid".into()));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn folia_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn folia_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a catalog model. `order` is the stencil accuracy (2, 4 or 6), or 0
/// for the default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn folia_model_new(
    name: *const c_char,
    epsilon: f64,
    codim: usize,
    resolution: usize,
    order: u32,
    out: *mut *mut FoliaModel,
) -> FoliaStatus {
    guard(|| {
        let name = string(name, "name")?;
        let order = match order {
            0 => StencilOrder::default(),
            o => StencilOrder::try_from(o as usize)?,
        };
        let spec = ModelSpec::new(&name, epsilon, resolution)
            .with_codim(codim)
            .with_order(order);
        let m = build_model(&spec)?;
        put(out, Box::into_raw(Box::new(FoliaModel(m))), "out")
    })
}

/// # Safety
/// `model` must come from [`folia_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn folia_model_free(model: *mut FoliaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn folia_model_node_count(model: *const FoliaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.node_count())
}

/// Codimension `q`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn folia_model_codim(model: *const FoliaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.q())
}

/// Build a catalog target. A NaN `curvature` selects the catalog default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn folia_target_new(name: *const c_char, curvature: f64, out: *mut *mut FoliaTarget) -> FoliaStatus {
    guard(|| {
        let name = string(name, "name")?;
        let c = if curvature.is_nan() { None } else { Some(curvature) };
        let t = build_target(&name, c)?;
        put(out, Box::into_raw(Box::new(FoliaTarget(t))), "out")
    })
}

/// # Safety
/// `target` must come from [`folia_target_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn folia_target_free(target: *mut FoliaTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

fn new_map(out: *mut *mut FoliaMap, m: MapField) -> Result<(), Fail> {
    unsafe { put(out, Box::into_raw(Box::new(FoliaMap(m))), "out") }
}

/// Identity map of the grid into the flat torus.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_map_identity(
    model: *const FoliaModel,
    target: *const FoliaTarget,
    out: *mut *mut FoliaMap,
) -> FoliaStatus {
    guard(|| {
        let (m, t) = (get(model, "model")?, get(target, "target")?);
        new_map(out, MapField::identity(&m.0, &t.0)?)
    })
}

/// `u = A x + b` with `A` row-major, `2 q` integer entries.
///
/// # Safety
/// Handles must be live; `matrix` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_map_linear(
    model: *const FoliaModel,
    target: *const FoliaTarget,
    matrix: *const i64,
    len: usize,
    b0: f64,
    b1: f64,
    out: *mut *mut FoliaMap,
) -> FoliaStatus {
    guard(|| {
        let (m, t) = (get(model, "model")?, get(target, "target")?);
        let a = slice(matrix, len, "matrix")?;
        if a.len() != 2 * m.0.q() {
            return Err(Fail(FoliaStatus::BufferSize, format!("matrix has {} entries, expected {}", a.len(), 2 * m.0.q())));
        }
        new_map(out, MapField::linear(&m.0, &t.0, a, [b0, b1])?)
    })
}

/// Map from node values (`2` per node, node-major) and the lift winding
/// (`2 q` entries, zeros for non-periodic targets).
///
/// # Safety
/// Handles must be live; arrays must hold the stated lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_map_from_values(
    model: *const FoliaModel,
    target: *const FoliaTarget,
    values: *const f64,
    len: usize,
    winding: *const i64,
    winding_len: usize,
    out: *mut *mut FoliaMap,
) -> FoliaStatus {
    guard(|| {
        let (m, t) = (get(model, "model")?, get(target, "target")?);
        let v = slice(values, len, "values")?;
        if v.len() != 2 * m.0.node_count() {
            return Err(Fail(FoliaStatus::BufferSize, format!("values has length {}, expected {}", v.len(), 2 * m.0.node_count())));
        }
        let w = slice(winding, winding_len, "winding")?;
        new_map(out, MapField::new(t.0.clone(), m.0.q(), v.to_vec(), w.to_vec())?)
    })
}

/// # Safety
/// `map` must come from a `folia_map_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn folia_map_free(map: *mut FoliaMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Length of the value array of a map (`2` per node), or 0 for null.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn folia_map_len(map: *const FoliaMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.values.len())
}

/// Copy the node values of a map into `out`.
///
/// # Safety
/// `map` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn folia_map_values(map: *const FoliaMap, out: *mut f64, len: usize) -> FoliaStatus {
    guard(|| {
        let m = get(map, "map")?;
        out_slice(out, len, m.0.values.len(), "out")?.copy_from_slice(&m.0.values);
        Ok(())
    })
}

fn with_data<R>(
    model: *const FoliaModel,
    map: *const FoliaMap,
    f: impl FnOnce(&ModelFoliation, &MapField, &MapData) -> Result<R, Fail>,
) -> Result<R, Fail> {
    let (m, p) = unsafe { (get(model, "model")?, get(map, "map")?) };
    same_grid(&m.0, &p.0)?;
    let md = MapData::new(&m.0, &p.0)?;
    f(&m.0, &p.0, &md)
}

/// Transversal energy.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_energy(model: *const FoliaModel, map: *const FoliaMap, out: *mut f64) -> FoliaStatus {
    guard(|| {
        let e = with_data(model, map, |m, _, md| Ok(energy_of(m, md)))?;
        put(out, e, "out")
    })
}

/// Transversal bi-energy.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_bienergy(model: *const FoliaModel, map: *const FoliaMap, out: *mut f64) -> FoliaStatus {
    guard(|| {
        let e = with_data(model, map, |m, _, md| Ok(bienergy_of(m, md)))?;
        put(out, e, "out")
    })
}

/// Tension field, `2` values per node.
///
/// # Safety
/// Handles must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn folia_tension(model: *const FoliaModel, map: *const FoliaMap, out: *mut f64, len: usize) -> FoliaStatus {
    guard(|| {
        let tau = with_data(model, map, |m, _, md| Ok(tension_of(m, md)))?;
        out_slice(out, len, tau.0.len(), "out")?.copy_from_slice(&tau.0);
        Ok(())
    })
}

/// Bi-tension field, `2` values per node.
///
/// # Safety
/// Handles must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn folia_bitension(model: *const FoliaModel, map: *const FoliaMap, out: *mut f64, len: usize) -> FoliaStatus {
    guard(|| {
        let t2 = with_data(model, map, |m, _, md| Ok(bitension_of(m, md)?))?;
        out_slice(out, len, t2.0.len(), "out")?.copy_from_slice(&t2.0);
        Ok(())
    })
}

/// Max-norm residual of the stress-energy conservation law.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_conservation_residual(
    model: *const FoliaModel,
    map: *const FoliaMap,
    out: *mut f64,
) -> FoliaStatus {
    guard(|| {
        let r = with_data(model, map, |m, _, md| Ok(conservation_residual_of(m, md)))?;
        put(out, r, "out")
    })
}

/// First variation along `v` (`2` values per node): Richardson-extrapolated
/// finite difference and the closed formula.
///
/// # Safety
/// Handles must be live; `v` must hold `len` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_first_variation(
    model: *const FoliaModel,
    map: *const FoliaMap,
    functional: FoliaFunctional,
    v: *const f64,
    len: usize,
    fd: *mut f64,
    formula: *mut f64,
) -> FoliaStatus {
    guard(|| {
        let (m, p) = (get(model, "model")?, get(map, "map")?);
        same_grid(&m.0, &p.0)?;
        let v = section(&p.0, slice(v, len, "v")?)?;
        let which = match functional {
            FoliaFunctional::Energy => Functional::Energy,
            FoliaFunctional::Bienergy => Functional::Bienergy,
        };
        let r = fd_first_variation(&m.0, &VariationPath::new(p.0.clone(), v)?, which, &DEFAULT_STEPS)?;
        put(fd, r.fd, "fd")?;
        put(formula, r.formula, "formula")
    })
}

/// The `k` lowest eigenvalues of the Jacobi operator, ascending. Uses the
/// iterative solver when `iterative` is non-zero.
///
/// # Safety
/// Handles must be live; `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn folia_lowest_eigenvalues(
    model: *const FoliaModel,
    map: *const FoliaMap,
    k: usize,
    iterative: i32,
    out: *mut f64,
) -> FoliaStatus {
    guard(|| {
        let (m, p) = (get(model, "model")?, get(map, "map")?);
        same_grid(&m.0, &p.0)?;
        if k == 0 {
            return Err(Fail(FoliaStatus::InvalidArgument, "k must be at least 1".into()));
        }
        let solver = if iterative != 0 { EigenSolver::Lanczos } else { EigenSolver::Dense };
        let rep = stability_report(&assemble_jacobi(&m.0, &p.0)?, k, solver)?;
        if rep.lowest.len() < k {
            return Err(Fail(
                FoliaStatus::InvalidArgument,
                format!("operator has only {} eigenvalues", rep.lowest.len()),
            ));
        }
        out_slice(out, k, k, "out")?.copy_from_slice(&rep.lowest[..k]);
        Ok(())
    })
}

/// Run a gradient flow with default step size. Writes the final map to
/// `out` and the number of steps taken to `steps`; `converged` is set to 1
/// when the max-norm tension dropped below `stop_tol`.
///
/// # Safety
/// Handles must be live; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn folia_flow(
    model: *const FoliaModel,
    map: *const FoliaMap,
    kind: FoliaFlow,
    max_steps: usize,
    stop_tol: f64,
    out: *mut *mut FoliaMap,
    steps: *mut usize,
    converged: *mut i32,
) -> FoliaStatus {
    guard(|| {
        let (m, p) = (get(model, "model")?, get(map, "map")?);
        same_grid(&m.0, &p.0)?;
        let cfg = FlowConfig {
            max_steps,
            stop_tol,
            ..Default::default()
        };
        let kind = match kind {
            FoliaFlow::Harmonic => FlowKind::Harmonic,
            FoliaFlow::Bienergy => FlowKind::Bienergy,
        };
        let (limit, trace) = flow(&p.0, &m.0, &cfg, kind)?;
        put(steps, trace.steps, "steps")?;
        put(converged, trace.converged as i32, "converged")?;
        new_map(out, limit)
    })
}
