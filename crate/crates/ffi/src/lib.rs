//! C ABI over `sis_core`.
//!
//! Every function returns a [`SisStatus`] and writes results through out
//! pointers. Objects are opaque handles released with their `_free`
//! function. On failure, `sis_last_error_message` returns a description that
//! stays valid until the next call on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sis_core::cli::write_json;
use sis_core::ensemble::run_ensemble;
use sis_core::model::TheoremCase;
use sis_core::sde::simulate_stream;
use sis_core::verify::logistic_reference;
use sis_core::{EnsembleConfig, EnsembleReport, Error, ModelParams, PathRecord, SchemeConfig, SchemeKind, StreamKey};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Too many steps were clamped to the domain.
    Unreliable = 3,
    NotApplicable = 4,
    OutOfRange = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SisScheme {
    EmState = 0,
    EmLog = 1,
    Milstein = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SisTheoremCase {
    One = 1,
    Two = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisParams {
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub capacity: f64,
    pub i0: f64,
}

/// `extinction_eps < 0` selects the default threshold; `record_stride == 0`
/// selects the automatic stride.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisSchemeConfig {
    pub scheme: SisScheme,
    pub dt: f64,
    pub t_end: f64,
    pub clamp_eps: f64,
    pub extinction_eps: f64,
    pub record_stride: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisRegime {
    pub r0s: f64,
    pub theorem_case: SisTheoremCase,
    pub rate_bound: f64,
    pub average_bound: f64,
    pub low_noise_extinction: bool,
    pub high_noise_extinction: bool,
    pub conjecture_region: bool,
    pub persistence: bool,
    pub deterministic: bool,
    pub critical: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisSample {
    pub t: f64,
    pub i: f64,
    pub log_i: f64,
    pub sum_i: f64,
    pub sum_i2: f64,
    pub mart_state: f64,
    pub mart_log: f64,
}

/// `slope_regression` is NaN when the path is too short to fit.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisPathSummary {
    pub extinct: bool,
    pub t_stop: f64,
    pub steps: u64,
    pub clamp_count: u64,
    pub slope_endpoint: f64,
    pub slope_regression: f64,
    pub avg_i: f64,
    pub avg_i2: f64,
    pub psi: f64,
    pub min_hoelder_margin: f64,
    pub max_state_residual: f64,
    pub max_log_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisEnsembleSummary {
    pub n_paths: u64,
    pub extinct_fraction: f64,
    pub slope_mean: f64,
    pub slope_stderr: f64,
    pub slope_q05: f64,
    pub slope_q25: f64,
    pub slope_q50: f64,
    pub slope_q75: f64,
    pub slope_q95: f64,
    pub avg_i_mean: f64,
    pub mart_mean: f64,
    pub mart_stderr: f64,
    pub max_identity_residual: f64,
    pub max_log_identity_residual: f64,
    pub max_decomposition_gap: f64,
    pub min_hoelder_margin: f64,
    pub unreliable_paths: u64,
}

/// Validated model parameters.
pub struct SisModel(ModelParams);

/// One simulated path.
pub struct SisPath(PathRecord);

/// An aggregated ensemble report.
pub struct SisEnsemble(EnsembleReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SisStatus {
    match e {
        Error::Unreliable { .. } => SisStatus::Unreliable,
        Error::NotApplicable(_) => SisStatus::NotApplicable,
        Error::Io(_) => SisStatus::Io,
        _ => SisStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> SisStatus
where
    F: FnOnce() -> Result<(), (SisStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SisStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SisStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (SisStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SisStatus, String) {
    (SisStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SisStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SisStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

impl From<SisScheme> for SchemeKind {
    fn from(s: SisScheme) -> Self {
        match s {
            SisScheme::EmState => SchemeKind::EulerMaruyamaState,
            SisScheme::EmLog => SchemeKind::EulerMaruyamaLog,
            SisScheme::Milstein => SchemeKind::Milstein,
        }
    }
}

fn scheme_config(c: &SisSchemeConfig) -> SchemeConfig {
    let mut cfg = SchemeConfig::new(c.scheme.into(), c.dt, c.t_end);
    cfg.clamp_eps = c.clamp_eps;
    if c.extinction_eps >= 0.0 {
        cfg = cfg.with_extinction_eps(c.extinction_eps);
    }
    if c.record_stride > 0 {
        cfg = cfg.with_record_stride(c.record_stride);
    }
    cfg
}

/// Description of the last failure on this thread; empty after a success.
#[no_mangle]
pub extern "C" fn sis_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sis_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default scheme settings: log scheme, `dt = 1e-3`, default thresholds.
#[no_mangle]
pub extern "C" fn sis_scheme_config_default(t_end: f64) -> SisSchemeConfig {
    SisSchemeConfig {
        scheme: SisScheme::EmLog,
        dt: sis_core::sde::DEFAULT_DT,
        t_end,
        clamp_eps: sis_core::sde::DEFAULT_CLAMP_EPS,
        extinction_eps: -1.0,
        record_stride: 0,
    }
}

#[no_mangle]
pub unsafe extern "C" fn sis_model_new(params: *const SisParams, out: *mut *mut SisModel) -> SisStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let out = as_out(out, "out")?;
        let m = ModelParams::new(p.beta, p.gamma, p.mu, p.sigma, p.capacity, p.i0).map_err(core_err)?;
        *out = Box::into_raw(Box::new(SisModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_model_free(model: *mut SisModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sis_model_params(model: *const SisModel, out: *mut SisParams) -> SisStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        *as_out(out, "out")? =
            SisParams { beta: m.beta, gamma: m.gamma, mu: m.mu, sigma: m.sigma, capacity: m.capacity, i0: m.i0 };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_model_classify(model: *const SisModel, out: *mut SisRegime) -> SisStatus {
    guard(|| {
        let r = as_ref(model, "model")?.0.classify().map_err(core_err)?;
        *as_out(out, "out")? = SisRegime {
            r0s: r.r0s,
            theorem_case: match r.theorem_case {
                TheoremCase::CaseI => SisTheoremCase::One,
                TheoremCase::CaseII => SisTheoremCase::Two,
            },
            rate_bound: r.rate_bound,
            average_bound: r.average_bound,
            low_noise_extinction: r.low_noise_extinction,
            high_noise_extinction: r.high_noise_extinction,
            conjecture_region: r.conjecture_region,
            persistence: r.persistence,
            deterministic: r.deterministic,
            critical: r.critical,
        };
        Ok(())
    })
}

fn coefficient(model: *const SisModel, i: f64, out: *mut f64, f: fn(&ModelParams, f64) -> f64) -> SisStatus {
    guard(|| {
        let m = unsafe { &as_ref(model, "model")?.0 };
        if !(0.0..=m.capacity).contains(&i) {
            return Err((SisStatus::OutOfRange, format!("i must lie in [0, {}], got {i}", m.capacity)));
        }
        *unsafe { as_out(out, "out")? } = f(m, i);
        Ok(())
    })
}

/// `(βN − μ − γ) i − β i²`.
#[no_mangle]
pub unsafe extern "C" fn sis_model_drift(model: *const SisModel, i: f64, out: *mut f64) -> SisStatus {
    coefficient(model, i, out, ModelParams::drift)
}

/// `σ (N − i) i`.
#[no_mangle]
pub unsafe extern "C" fn sis_model_diffusion(model: *const SisModel, i: f64, out: *mut f64) -> SisStatus {
    coefficient(model, i, out, ModelParams::diffusion)
}

/// Drift of `log I` at level `i`.
#[no_mangle]
pub unsafe extern "C" fn sis_model_log_drift(model: *const SisModel, i: f64, out: *mut f64) -> SisStatus {
    coefficient(model, i, out, ModelParams::log_drift)
}

/// Noise-free logistic solution at time `t`; requires `sigma == 0`.
#[no_mangle]
pub unsafe extern "C" fn sis_logistic_reference(model: *const SisModel, t: f64, out: *mut f64) -> SisStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        if t.is_nan() || t < 0.0 {
            return Err((SisStatus::InvalidArgument, format!("t must be >= 0, got {t}")));
        }
        *as_out(out, "out")? = logistic_reference(m, t).map_err(core_err)?;
        Ok(())
    })
}

/// Simulate path `stream` of the ensemble keyed by `seed`.
#[no_mangle]
pub unsafe extern "C" fn sis_path_simulate(
    model: *const SisModel,
    config: *const SisSchemeConfig,
    seed: u64,
    stream: u64,
    out: *mut *mut SisPath,
) -> SisStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let cfg = scheme_config(as_ref(config, "config")?);
        let out = as_out(out, "out")?;
        let rec = simulate_stream(m, &cfg, StreamKey::new(seed, stream)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(SisPath(rec)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_path_free(path: *mut SisPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sis_path_sample_count(path: *const SisPath, out: *mut usize) -> SisStatus {
    guard(|| {
        *as_out(out, "out")? = as_ref(path, "path")?.0.samples.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_path_sample(path: *const SisPath, index: usize, out: *mut SisSample) -> SisStatus {
    guard(|| {
        let samples = &as_ref(path, "path")?.0.samples;
        let s = samples
            .get(index)
            .ok_or_else(|| (SisStatus::OutOfRange, format!("sample {index} of {}", samples.len())))?;
        *as_out(out, "out")? = SisSample {
            t: s.t,
            i: s.i,
            log_i: s.log_i,
            sum_i: s.sum_i,
            sum_i2: s.sum_i2,
            mart_state: s.mart_state,
            mart_log: s.mart_log,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_path_summary(path: *const SisPath, out: *mut SisPathSummary) -> SisStatus {
    guard(|| {
        let r = &as_ref(path, "path")?.0;
        *as_out(out, "out")? = SisPathSummary {
            extinct: r.extinct,
            t_stop: r.t_stop,
            steps: r.steps,
            clamp_count: r.clamp_count,
            slope_endpoint: r.slope_endpoint,
            slope_regression: r.slope_regression.unwrap_or(f64::NAN),
            avg_i: r.avg_i_final,
            avg_i2: r.avg_i2_final,
            psi: r.psi_final,
            min_hoelder_margin: r.min_hoelder_margin,
            max_state_residual: r.max_state_residual,
            max_log_residual: r.max_log_residual,
        };
        Ok(())
    })
}

/// Run `n_paths` paths on at most `max_workers` threads (0 means all cores).
/// The report does not depend on `max_workers`.
#[no_mangle]
pub unsafe extern "C" fn sis_ensemble_run(
    model: *const SisModel,
    config: *const SisSchemeConfig,
    n_paths: u64,
    seed: u64,
    max_workers: usize,
    out: *mut *mut SisEnsemble,
) -> SisStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.0;
        let cfg = scheme_config(as_ref(config, "config")?);
        let out = as_out(out, "out")?;
        let mut ec = EnsembleConfig::new(n_paths, seed);
        if max_workers > 0 {
            ec = ec.with_workers(max_workers);
        }
        let report = run_ensemble(m, &cfg, &ec).map_err(core_err)?;
        *out = Box::into_raw(Box::new(SisEnsemble(report)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_ensemble_free(ensemble: *mut SisEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sis_ensemble_summary(ensemble: *const SisEnsemble, out: *mut SisEnsembleSummary) -> SisStatus {
    guard(|| {
        let r = &as_ref(ensemble, "ensemble")?.0;
        let q = r.slope_quantiles;
        *as_out(out, "out")? = SisEnsembleSummary {
            n_paths: r.n_paths,
            extinct_fraction: r.extinct_fraction,
            slope_mean: r.slope_mean,
            slope_stderr: r.slope_stderr,
            slope_q05: q.p05,
            slope_q25: q.p25,
            slope_q50: q.p50,
            slope_q75: q.p75,
            slope_q95: q.p95,
            avg_i_mean: r.avg_i_mean,
            mart_mean: r.mart_mean,
            mart_stderr: r.mart_stderr,
            max_identity_residual: r.max_identity_residual,
            max_log_identity_residual: r.max_log_identity_residual,
            max_decomposition_gap: r.max_decomposition_gap,
            min_hoelder_margin: r.min_hoelder_margin,
            unreliable_paths: r.unreliable_paths,
        };
        Ok(())
    })
}

/// Per-path endpoint slope, in path order.
#[no_mangle]
pub unsafe extern "C" fn sis_ensemble_path_slope(
    ensemble: *const SisEnsemble,
    index: usize,
    out: *mut f64,
) -> SisStatus {
    guard(|| {
        let paths = &as_ref(ensemble, "ensemble")?.0.per_path;
        let p = paths.get(index).ok_or_else(|| (SisStatus::OutOfRange, format!("path {index} of {}", paths.len())))?;
        *as_out(out, "out")? = p.slope_endpoint;
        Ok(())
    })
}

/// Full report as JSON. Release the string with [`sis_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sis_ensemble_to_json(ensemble: *const SisEnsemble, out: *mut *mut c_char) -> SisStatus {
    guard(|| {
        let r = &as_ref(ensemble, "ensemble")?.0;
        let out = as_out(out, "out")?;
        let mut buf = Vec::new();
        write_json(r, &mut buf).map_err(|e| (SisStatus::Io, e.to_string()))?;
        while buf.last() == Some(&b'\n') {
            buf.pop();
        }
        *out = CString::new(buf).map_err(|e| (SisStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sis_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
