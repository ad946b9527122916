use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sis_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sis_last_error_message()) }.to_string_lossy().into_owned()
}

fn model(p: SisParams) -> *mut SisModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sis_model_new(&p, &mut m) }, SisStatus::Ok, "{}", last_error());
    m
}

const P_CASE_ONE: SisParams = SisParams { beta: 1.0, gamma: 20.0, mu: 20.0, sigma: 0.11, capacity: 100.0, i0: 50.0 };

#[test]
fn classify_matches_core() {
    let m = model(P_CASE_ONE);
    let mut slot = std::mem::MaybeUninit::<SisRegime>::uninit();
    assert_eq!(unsafe { sis_model_classify(m, slot.as_mut_ptr()) }, SisStatus::Ok);
    let r = unsafe { slot.assume_init() };
    let core = sis_core::ModelParams::new(1.0, 20.0, 20.0, 0.11, 100.0, 50.0).unwrap().classify().unwrap();
    assert_eq!(r.r0s, core.r0s);
    assert_eq!(r.rate_bound, core.rate_bound);
    assert_eq!(r.theorem_case, SisTheoremCase::One);
    assert!(r.conjecture_region && !r.persistence);
    unsafe { sis_model_free(m) };
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let bad = SisParams { i0: 0.0, ..P_CASE_ONE };
    assert_eq!(unsafe { sis_model_new(&bad, &mut m) }, SisStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("i0"), "{}", last_error());
    assert_eq!(unsafe { sis_model_new(ptr::null(), &mut m) }, SisStatus::NullPointer);

    let good = model(P_CASE_ONE);
    let mut x = 0.0;
    assert_eq!(unsafe { sis_logistic_reference(good, 1.0, &mut x) }, SisStatus::NotApplicable);
    assert_eq!(unsafe { sis_model_drift(good, -1.0, &mut x) }, SisStatus::OutOfRange);
    assert_eq!(unsafe { sis_model_drift(good, 10.0, ptr::null_mut()) }, SisStatus::NullPointer);
    assert_eq!(unsafe { sis_model_drift(good, 10.0, &mut x) }, SisStatus::Ok);
    assert!(last_error().is_empty());

    let mut cfg = sis_scheme_config_default(1.0);
    cfg.dt = 2.0;
    let mut path = ptr::null_mut();
    assert_eq!(unsafe { sis_path_simulate(good, &cfg, 0, 0, &mut path) }, SisStatus::InvalidArgument);
    assert!(path.is_null());
    unsafe { sis_model_free(good) };
    unsafe { sis_model_free(ptr::null_mut()) };
}

#[test]
fn path_matches_core_stream() {
    let m = model(P_CASE_ONE);
    let cfg = sis_scheme_config_default(3.0);
    let mut path = ptr::null_mut();
    assert_eq!(unsafe { sis_path_simulate(m, &cfg, 9, 4, &mut path) }, SisStatus::Ok);
    let mut s = unsafe { std::mem::zeroed::<SisPathSummary>() };
    assert_eq!(unsafe { sis_path_summary(path, &mut s) }, SisStatus::Ok);

    let p = sis_core::ModelParams::new(1.0, 20.0, 20.0, 0.11, 100.0, 50.0).unwrap();
    let c = sis_core::SchemeConfig::new(sis_core::SchemeKind::EulerMaruyamaLog, 1e-3, 3.0);
    let direct = sis_core::sde::integrate(&p, &c, sis_core::StreamKey::new(9, 4)).unwrap();
    assert_eq!(s.slope_endpoint.to_bits(), direct.slope_endpoint.to_bits());
    assert_eq!(s.steps, direct.steps);

    let mut n = 0usize;
    assert_eq!(unsafe { sis_path_sample_count(path, &mut n) }, SisStatus::Ok);
    assert_eq!(n, direct.samples.len());
    let mut smp = unsafe { std::mem::zeroed::<SisSample>() };
    assert_eq!(unsafe { sis_path_sample(path, n - 1, &mut smp) }, SisStatus::Ok);
    assert_eq!(smp.i, direct.final_i());
    unsafe { sis_path_free(path) };
    unsafe { sis_model_free(m) };
}

#[test]
fn ensemble_is_independent_of_workers() {
    let m = model(P_CASE_ONE);
    let cfg = sis_scheme_config_default(2.0);
    let json = |workers: usize| {
        let mut e = ptr::null_mut();
        assert_eq!(unsafe { sis_ensemble_run(m, &cfg, 12, 5, workers, &mut e) }, SisStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { sis_ensemble_to_json(e, &mut s) }, SisStatus::Ok);
        let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
        let mut slope = 0.0;
        assert_eq!(unsafe { sis_ensemble_path_slope(e, 11, &mut slope) }, SisStatus::Ok);
        assert_eq!(unsafe { sis_ensemble_path_slope(e, 12, &mut slope) }, SisStatus::OutOfRange);
        unsafe {
            sis_string_free(s);
            sis_ensemble_free(e);
        }
        text
    };
    let one = json(1);
    assert_eq!(one, json(4));
    let parsed: sis_core::EnsembleReport = serde_json::from_str(&one).unwrap();
    assert_eq!(parsed.n_paths, 12);
    unsafe { sis_model_free(m) };
}

/// The static library cargo built alongside this test, in `<profile>/deps`.
fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    [deps.join("libsis_ffi.a"), deps.parent()?.join("libsis_ffi.a")].into_iter().find(|p| p.exists())
}

#[test]
fn c_program_links_against_header() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = static_lib().expect("libsis_ffi.a not found next to the test binary");
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let build = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
