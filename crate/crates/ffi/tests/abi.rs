use std::ffi::{CStr, CString};
use std::ptr;

use perfhom_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(perfhom_last_error_message()) }.to_string_lossy().into_owned()
}

fn disk_cell(radius: f64, c0: f64) -> *mut PerfhomCell {
    let mut cell = ptr::null_mut();
    unsafe {
        assert_eq!(perfhom_cell_new(c0, &mut cell), PerfhomStatus::Ok);
        assert_eq!(perfhom_cell_add_disk(cell, 0.0, 0.0, radius), PerfhomStatus::Ok);
    }
    cell
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(perfhom_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn solve_and_read_back() {
    let cell = disk_cell(0.25, 0.2);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(perfhom_cell_problem_solve(cell, 16, PerfhomWeightMode::DistanceType, &mut sol), PerfhomStatus::Ok);
        let mut a = [0.0; 4];
        assert_eq!(perfhom_solution_tensor(sol, a.as_mut_ptr()), PerfhomStatus::Ok);
        assert!(a[0] > 0.0 && (a[0] - a[3]).abs() < 1e-10 * a[0]);
        assert!(a[1].abs() < 1e-12 && a[2].abs() < 1e-12);
        let mut a0 = 0.0;
        assert_eq!(perfhom_solution_a0(sol, &mut a0), PerfhomStatus::Ok);
        assert!(a[0] < a0);

        let mut lambda = 0.0;
        assert_eq!(perfhom_solution_lambda_bar(sol, &mut lambda), PerfhomStatus::Unavailable);
        assert!(!last_error().is_empty());

        let mut nv = 0usize;
        assert_eq!(perfhom_solution_vertex_count(sol, &mut nv), PerfhomStatus::Ok);
        let mut chi = vec![0.0; nv];
        assert_eq!(perfhom_solution_corrector(sol, 0, chi.as_mut_ptr(), nv), PerfhomStatus::Ok);
        assert!(chi.iter().any(|v| *v != 0.0));
        assert_eq!(perfhom_solution_corrector(sol, 0, chi.as_mut_ptr(), nv - 1), PerfhomStatus::InvalidArgument);
        assert_eq!(perfhom_solution_corrector(sol, 2, chi.as_mut_ptr(), nv), PerfhomStatus::InvalidArgument);
        perfhom_solution_free(sol);
        perfhom_cell_free(cell);
    }
}

#[test]
fn ground_state_has_an_eigenvalue() {
    let mut cell = ptr::null_mut();
    let square = [-0.2, -0.2, 0.2, -0.2, 0.2, 0.2, -0.2, 0.2];
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(perfhom_cell_new(0.2, &mut cell), PerfhomStatus::Ok);
        assert_eq!(perfhom_cell_add_polygon(cell, square.as_ptr(), 4), PerfhomStatus::Ok);
        assert_eq!(perfhom_cell_problem_solve(cell, 10, PerfhomWeightMode::GroundState, &mut sol), PerfhomStatus::Ok);
        let mut lambda = 0.0;
        assert_eq!(perfhom_solution_lambda_bar(sol, &mut lambda), PerfhomStatus::Ok);
        assert!(lambda > 0.0);
        assert_eq!(last_error(), "");
        perfhom_solution_free(sol);
        perfhom_cell_free(cell);
    }
}

#[test]
fn geometry_errors_map_to_codes() {
    let mut sol = ptr::null_mut();
    unsafe {
        let close = disk_cell(0.25, 0.3);
        assert_eq!(perfhom_cell_problem_solve(close, 8, PerfhomWeightMode::DistanceType, &mut sol), PerfhomStatus::SeparationViolation);
        assert!(last_error().contains("separation"));
        assert!(sol.is_null());
        perfhom_cell_free(close);

        let mut outside = ptr::null_mut();
        assert_eq!(perfhom_cell_new(0.1, &mut outside), PerfhomStatus::Ok);
        assert_eq!(perfhom_cell_add_disk(outside, 0.7, 0.0, 0.1), PerfhomStatus::Ok);
        assert_eq!(perfhom_cell_problem_solve(outside, 8, PerfhomWeightMode::DistanceType, &mut sol), PerfhomStatus::HoleOutsideCell);
        perfhom_cell_free(outside);

        assert_eq!(perfhom_cell_new(-1.0, &mut outside), PerfhomStatus::InvalidArgument);
        assert_eq!(perfhom_cell_add_polygon(ptr::null_mut(), ptr::null(), 3), PerfhomStatus::NullPointer);
        assert_eq!(perfhom_solution_tensor(ptr::null(), ptr::null_mut()), PerfhomStatus::NullPointer);
        perfhom_cell_free(ptr::null_mut());
        perfhom_solution_free(ptr::null_mut());
        perfhom_string_free(ptr::null_mut());
    }
}

#[test]
fn run_experiment_returns_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cell.toml");
    std::fs::write(&config, "experiment = \"cell_only\"\nn = 8\n\n[geometry]\nc0 = 0.2\nholes = [{ label = 0, shape = { kind = \"disk\", center = [0.0, 0.0], radius = 0.25 } }]\n").unwrap();
    let out = dir.path().join("out");
    let config_c = CString::new(config.to_str().unwrap()).unwrap();
    let out_c = CString::new(out.to_str().unwrap()).unwrap();
    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(perfhom_run_experiment(config_c.as_ptr(), out_c.as_ptr(), &mut json), PerfhomStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        perfhom_string_free(json);
        assert!(text.contains("\"a_hat\""));
        assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), text);

        let missing = CString::new(dir.path().join("nope.toml").to_str().unwrap()).unwrap();
        assert_eq!(perfhom_run_experiment(missing.as_ptr(), out_c.as_ptr(), ptr::null_mut()), PerfhomStatus::IoError);
        assert_eq!(perfhom_run_experiment(ptr::null(), out_c.as_ptr(), ptr::null_mut()), PerfhomStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/perfhom.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 13);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct PerfhomCell PerfhomCell;"));
}

#[test]
fn header_compiles_as_c() {
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/perfhom.h"))
        .status()
        .expect("a C compiler is needed to link this crate");
    assert!(status.success());
}
