use std::ffi::{CStr, CString};
use std::ptr;

use feederopt_ffi::*;

fn small_config() -> *mut FoConfig {
    let toml = CString::new(
        "nodes = 6\nslots_per_hour = 1\nb_max_pu = 2e-4\ns_max = [1.1]\npenetration = [0.5]\nworkers = 1\n",
    )
    .unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { fo_config_from_toml(toml.as_ptr(), &mut cfg) }, FoStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

fn last_error() -> String {
    let p = fo_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn solve_and_read_back() {
    let cfg = small_config();
    let mut sc = ptr::null_mut();
    let status = unsafe {
        fo_solve_scenario(cfg, 1.1, 0.5, FoPlacement::Rear as u32, FoController::Global as u32, &mut sc)
    };
    assert_eq!(status, FoStatus::Ok);

    let mut summary = std::mem::MaybeUninit::<FoSummary>::uninit();
    assert_eq!(unsafe { fo_scenario_summary(sc, summary.as_mut_ptr()) }, FoStatus::Ok);
    let summary = unsafe { summary.assume_init() };
    assert_eq!(summary.status, FoScenarioStatus::Solved);
    assert_eq!((summary.nodes, summary.slots), (6, 24));
    assert!(summary.loss_pu > 0.0 && summary.savings.is_finite());
    assert!(summary.primal_residual <= 1e-6);

    // size query, then the real copy
    let mut written = 0usize;
    let status = unsafe { fo_scenario_series(sc, FoSeries::Voltage as u32, ptr::null_mut(), 0, &mut written) };
    assert_eq!(status, FoStatus::OutOfRange);
    assert_eq!(written, 7 * 24);
    let mut v = vec![0.0; written];
    let status = unsafe { fo_scenario_series(sc, FoSeries::Voltage as u32, v.as_mut_ptr(), v.len(), &mut written) };
    assert_eq!(status, FoStatus::Ok);
    assert!(v[..24].iter().all(|&x| x == 1.0));
    let dv = v.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
    assert!((dv - summary.delta_v).abs() < 1e-15);

    let status = unsafe { fo_scenario_series(sc, 99, v.as_mut_ptr(), v.len(), &mut written) };
    assert_eq!(status, FoStatus::InvalidArgument);

    unsafe {
        fo_scenario_free(sc);
        fo_config_free(cfg);
    }
}

#[test]
fn errors_are_reported() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("nodez = 3").unwrap();
    assert_eq!(unsafe { fo_config_from_toml(bad.as_ptr(), &mut cfg) }, FoStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("nodez"));

    assert_eq!(unsafe { fo_config_from_toml(ptr::null(), &mut cfg) }, FoStatus::NullPointer);
    assert_eq!(unsafe { fo_config_new(ptr::null_mut()) }, FoStatus::NullPointer);

    let missing = CString::new("/nonexistent/study.toml").unwrap();
    assert_eq!(unsafe { fo_config_from_path(missing.as_ptr(), &mut cfg) }, FoStatus::Io);

    let cfg = small_config();
    let mut sc = ptr::null_mut();
    let status = unsafe { fo_solve_scenario(cfg, 1.1, 0.5, 7, 0, &mut sc) };
    assert_eq!(status, FoStatus::InvalidArgument);
    let status = unsafe { fo_solve_scenario(cfg, 0.5, 0.5, 0, 0, &mut sc) };
    assert_eq!(status, FoStatus::InvalidArgument);
    assert!(last_error().contains("s_max"));
    assert!(sc.is_null());
    unsafe {
        fo_config_free(cfg);
        fo_config_free(ptr::null_mut());
        fo_scenario_free(ptr::null_mut());
    }
}

#[test]
fn sweep_writes_files() {
    let cfg = small_config();
    assert_eq!(unsafe { fo_config_set_workers(cfg, 2) }, FoStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut inconclusive = usize::MAX;
    assert_eq!(unsafe { fo_run_sweep(cfg, out.as_ptr(), &mut inconclusive) }, FoStatus::Ok);
    assert_eq!(inconclusive, 0);
    let rows = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 7);
    assert!(dir.path().join("comparison.csv").exists());
    unsafe { fo_config_free(cfg) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(fo_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/feederopt.h");
    for name in [
        "fo_last_error",
        "fo_version",
        "fo_config_new",
        "fo_config_from_toml",
        "fo_config_from_path",
        "fo_config_set_workers",
        "fo_config_free",
        "fo_solve_scenario",
        "fo_scenario_summary",
        "fo_scenario_series",
        "fo_scenario_free",
        "fo_run_sweep",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
