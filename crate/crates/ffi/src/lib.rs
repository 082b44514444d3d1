//! C ABI over the `perfhom` toolkit.
//!
//! Every fallible entry point returns a [`PerfhomStatus`]. On failure the
//! message is available from [`perfhom_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use perfhom::cell_problem::{solve_cell, CellSolution};
use perfhom::config::ExperimentConfig;
use perfhom::fem::{CoefficientField, LinearSolveSpec};
use perfhom::geometry::{build_cell_geometry, HoleSpec};
use perfhom::runner::{run_experiment, RunOptions};
use perfhom::weight::WeightMode;
use perfhom::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerfhomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    HoleOutsideCell = 3,
    SeparationViolation = 4,
    GeometryViolation = 5,
    MeshFailure = 6,
    SolverFailure = 7,
    ConfigError = 8,
    IoError = 9,
    Unavailable = 10,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerfhomWeightMode {
    DistanceType = 0,
    GroundState = 1,
}

/// Hole list under construction.
pub struct PerfhomCell {
    c0: f64,
    holes: Vec<HoleSpec>,
}

/// Result of a cell problem solve.
pub struct PerfhomCellSolution {
    inner: CellSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> PerfhomStatus {
    match e {
        Error::InvalidArgument(_) => PerfhomStatus::InvalidArgument,
        Error::HoleOutsideCell { .. } => PerfhomStatus::HoleOutsideCell,
        Error::SeparationViolation { .. } => PerfhomStatus::SeparationViolation,
        Error::GeometryViolation(_) => PerfhomStatus::GeometryViolation,
        Error::MeshGenerationFailure(_) | Error::TilingMismatch(_) | Error::MeshLineageMismatch(_) => {
            PerfhomStatus::MeshFailure
        }
        Error::ConfigParse(_) | Error::ConfigValidation { .. } => PerfhomStatus::ConfigError,
        Error::Io { .. } => PerfhomStatus::IoError,
        _ => PerfhomStatus::SolverFailure,
    }
}

fn fail(status: PerfhomStatus, msg: &str) -> PerfhomStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PerfhomStatus) -> PerfhomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PerfhomStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(PerfhomStatus::Panic, "internal panic"),
    }
}

fn lift(r: perfhom::Result<()>) -> PerfhomStatus {
    match r {
        Ok(()) => PerfhomStatus::Ok,
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PerfhomStatus> {
    if p.is_null() {
        return Err(fail(PerfhomStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PerfhomStatus::InvalidArgument, &format!("{what} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn perfhom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn perfhom_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an empty cell with separation constant `c0`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn perfhom_cell_new(c0: f64, out: *mut *mut PerfhomCell) -> PerfhomStatus {
    guard(|| {
        if out.is_null() {
            return fail(PerfhomStatus::NullPointer, "out is null");
        }
        if !(c0.is_finite() && c0 > 0.0) {
            return fail(PerfhomStatus::InvalidArgument, "c0 must be positive");
        }
        *out = Box::into_raw(Box::new(PerfhomCell { c0, holes: Vec::new() }));
        PerfhomStatus::Ok
    })
}

/// Adds a disk hole. Geometry is validated when the cell is solved.
///
/// # Safety
/// `cell` must come from [`perfhom_cell_new`] and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn perfhom_cell_add_disk(cell: *mut PerfhomCell, cx: f64, cy: f64, radius: f64) -> PerfhomStatus {
    guard(|| {
        let Some(cell) = cell.as_mut() else {
            return fail(PerfhomStatus::NullPointer, "cell is null");
        };
        let label = cell.holes.len();
        cell.holes.push(HoleSpec::disk(label, [cx, cy], radius));
        PerfhomStatus::Ok
    })
}

/// Adds a polygon hole from `count` interleaved `x, y` pairs.
///
/// # Safety
/// `cell` must be live; `xy` must point to `2 * count` doubles.
#[no_mangle]
pub unsafe extern "C" fn perfhom_cell_add_polygon(cell: *mut PerfhomCell, xy: *const f64, count: usize) -> PerfhomStatus {
    guard(|| {
        let Some(cell) = cell.as_mut() else {
            return fail(PerfhomStatus::NullPointer, "cell is null");
        };
        if xy.is_null() {
            return fail(PerfhomStatus::NullPointer, "xy is null");
        }
        if count < 3 {
            return fail(PerfhomStatus::InvalidArgument, "a polygon needs at least 3 vertices");
        }
        let coords = std::slice::from_raw_parts(xy, 2 * count);
        let vertices = coords.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
        let label = cell.holes.len();
        cell.holes.push(HoleSpec::polygon(label, vertices));
        PerfhomStatus::Ok
    })
}

/// # Safety
/// `cell` must be null or come from [`perfhom_cell_new`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn perfhom_cell_free(cell: *mut PerfhomCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Meshes the cell with `n` intervals per side and solves the corrector problems
/// for the identity coefficient.
///
/// # Safety
/// `cell` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perfhom_cell_problem_solve(
    cell: *const PerfhomCell,
    n: u32,
    mode: PerfhomWeightMode,
    out: *mut *mut PerfhomCellSolution,
) -> PerfhomStatus {
    guard(|| {
        let Some(cell) = cell.as_ref() else {
            return fail(PerfhomStatus::NullPointer, "cell is null");
        };
        if out.is_null() {
            return fail(PerfhomStatus::NullPointer, "out is null");
        }
        let mode = match mode {
            PerfhomWeightMode::DistanceType => WeightMode::DistanceType,
            PerfhomWeightMode::GroundState => WeightMode::GroundState,
        };
        let solved = build_cell_geometry(cell.holes.clone(), cell.c0).and_then(|geo| {
            solve_cell(&geo, n as usize, &CoefficientField::identity(), mode, 0.0, &LinearSolveSpec::default())
        });
        match solved {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PerfhomCellSolution { inner }));
                PerfhomStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// Writes the homogenized matrix in row-major order into `out[0..4]`.
///
/// # Safety
/// `sol` must be live; `out` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_tensor(sol: *const PerfhomCellSolution, out: *mut f64) -> PerfhomStatus {
    guard(|| {
        let (Some(sol), false) = (sol.as_ref(), out.is_null()) else {
            return fail(PerfhomStatus::NullPointer, "null argument");
        };
        let a = sol.inner.tensor.a_hat;
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&[a[0][0], a[0][1], a[1][0], a[1][1]]);
        PerfhomStatus::Ok
    })
}

/// Cell average of the squared weight.
///
/// # Safety
/// `sol` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_a0(sol: *const PerfhomCellSolution, out: *mut f64) -> PerfhomStatus {
    guard(|| {
        let (Some(sol), false) = (sol.as_ref(), out.is_null()) else {
            return fail(PerfhomStatus::NullPointer, "null argument");
        };
        *out = sol.inner.tensor.a0;
        PerfhomStatus::Ok
    })
}

/// First cell eigenvalue; `Unavailable` for the distance weight.
///
/// # Safety
/// `sol` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_lambda_bar(sol: *const PerfhomCellSolution, out: *mut f64) -> PerfhomStatus {
    guard(|| {
        let (Some(sol), false) = (sol.as_ref(), out.is_null()) else {
            return fail(PerfhomStatus::NullPointer, "null argument");
        };
        match sol.inner.weight.lambda_bar {
            Some(l) => {
                *out = l;
                PerfhomStatus::Ok
            }
            None => fail(PerfhomStatus::Unavailable, "the weight has no cell eigenvalue"),
        }
    })
}

/// # Safety
/// `sol` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_vertex_count(sol: *const PerfhomCellSolution, out: *mut usize) -> PerfhomStatus {
    guard(|| {
        let (Some(sol), false) = (sol.as_ref(), out.is_null()) else {
            return fail(PerfhomStatus::NullPointer, "null argument");
        };
        *out = sol.inner.mesh.vertex_count();
        PerfhomStatus::Ok
    })
}

/// Copies the nodal values of corrector `j` (0 or 1) into `out[0..len]`;
/// `len` must equal the vertex count.
///
/// # Safety
/// `sol` must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_corrector(
    sol: *const PerfhomCellSolution,
    j: u32,
    out: *mut f64,
    len: usize,
) -> PerfhomStatus {
    guard(|| {
        let (Some(sol), false) = (sol.as_ref(), out.is_null()) else {
            return fail(PerfhomStatus::NullPointer, "null argument");
        };
        if j > 1 {
            return fail(PerfhomStatus::InvalidArgument, "corrector index must be 0 or 1");
        }
        let chi = &sol.inner.correctors.chi[j as usize];
        if len != chi.len() {
            return fail(PerfhomStatus::InvalidArgument, &format!("buffer length {len}, expected {}", chi.len()));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(chi);
        PerfhomStatus::Ok
    })
}

/// # Safety
/// `sol` must be null or come from [`perfhom_cell_problem_solve`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn perfhom_solution_free(sol: *mut PerfhomCellSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Runs the experiment in the TOML file `config_path`, writing outputs to
/// `out_dir`. If `report_json` is non-null it receives the report, to be
/// released with [`perfhom_string_free`].
///
/// # Safety
/// Strings must be NUL-terminated; `report_json` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn perfhom_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    report_json: *mut *mut c_char,
) -> PerfhomStatus {
    guard(|| {
        let config = match c_str(config_path, "config_path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let out = match c_str(out_dir, "out_dir") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let outcome = ExperimentConfig::load(Path::new(config))
            .and_then(|cfg| run_experiment(cfg, Path::new(out), &RunOptions::default()));
        match outcome {
            Ok(o) => {
                if !report_json.is_null() {
                    *report_json = CString::new(o.report.to_json()).unwrap_or_default().into_raw();
                }
                PerfhomStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn perfhom_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
