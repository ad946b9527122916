//! Path functionals: time averages, the integral-identity residuals, log-slope
//! estimators and extinction detection.
//!
//! All averages use the same left-endpoint sums the integrator accumulates,
//! so on an Euler–Maruyama state path
//!
//! ```text
//! ⟨I²⟩ = (N − (μ+γ)/β) ⟨I⟩ + ψ,   ψ = (I(0) − I(t))/(βt) + (σ/(βt)) Σ (N − I_k) I_k ΔB_k
//! ```
//!
//! holds to rounding, and on an Euler–Maruyama log path
//!
//! ```text
//! log I(t) − log I(0) = Σ log_drift(I_k) Δt + σ Σ (N − I_k) ΔB_k
//! ```
//!
//! holds to rounding. Clamp displacements are carried as separate sums and
//! enter both identities, so clamped steps do not break them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::sde::{SchemeConfig, SchemeKind, StreamKey, MAX_CLAMP_FRACTION};

/// Minimum number of samples in the second half of the path for [`slope_regression`].
pub const MIN_REGRESSION_SAMPLES: usize = 10;

/// One recorded point: the state and every running sum at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub i: f64,
    pub log_i: f64,
    pub sum_i: f64,
    pub sum_i2: f64,
    pub mart_state: f64,
    pub mart_log: f64,
    /// Clamp displacement in `i`; zero unless a state-space clamp fired.
    pub shift_state: f64,
    /// Clamp displacement in `log i`; zero unless a log-scheme clamp fired.
    pub shift_log: f64,
}

/// One simulated trajectory with its derived functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub params_hash: u64,
    pub params: ModelParams,
    pub config: SchemeConfig,
    pub key: StreamKey,
    /// Recorded samples, starting at `t = 0` and ending at `t_stop`.
    pub samples: Vec<Sample>,
    pub extinct: bool,
    /// Horizon, or the extinction time if the path went extinct.
    pub t_stop: f64,
    pub steps: u64,
    pub clamp_count: u64,
    pub extinction_eps: f64,
    pub slope_endpoint: f64,
    pub slope_regression: Option<f64>,
    pub avg_i_final: f64,
    pub avg_i2_final: f64,
    pub psi_final: f64,
    /// `⟨I²⟩ − ⟨I⟩²` at `t_stop`.
    pub hoelder_margin: f64,
    /// Smallest `⟨I²⟩ − ⟨I⟩²` over all recorded samples with `t > 0`.
    pub min_hoelder_margin: f64,
    /// Largest relative residual of the state identity over recorded samples.
    pub max_state_residual: f64,
    /// Largest relative residual of the log identity over recorded samples.
    pub max_log_residual: f64,
}

impl PathRecord {
    pub(crate) fn finalize(
        params: ModelParams,
        config: SchemeConfig,
        key: StreamKey,
        samples: Vec<Sample>,
        extinct: bool,
        clamp_count: u64,
        steps: u64,
    ) -> Self {
        let last = *samples.last().expect("a path always holds its initial sample");
        let t_stop = last.t;
        let extinction_eps = config.extinction_eps(&params);
        let (avg_i_final, avg_i2_final, psi_final) = if t_stop > 0.0 {
            (last.sum_i / t_stop, last.sum_i2 / t_stop, psi_at(&last, &params))
        } else {
            (params.i0, params.i0 * params.i0, 0.0)
        };

        let mut min_hoelder_margin = f64::INFINITY;
        let mut max_state_residual: f64 = 0.0;
        let mut max_log_residual: f64 = 0.0;
        for s in samples.iter().filter(|s| s.t > 0.0) {
            min_hoelder_margin = min_hoelder_margin.min(hoelder_margin_at(s));
            max_state_residual = max_state_residual.max(state_identity_residual(s, &params));
            max_log_residual = max_log_residual.max(log_identity_residual(s, &params));
        }
        if !min_hoelder_margin.is_finite() {
            min_hoelder_margin = 0.0;
        }

        let mut record = PathRecord {
            params_hash: params_hash(&params, &config, key),
            params,
            config,
            key,
            samples,
            extinct,
            t_stop,
            steps,
            clamp_count,
            extinction_eps,
            slope_endpoint: 0.0,
            slope_regression: None,
            avg_i_final,
            avg_i2_final,
            psi_final,
            hoelder_margin: if t_stop > 0.0 { avg_i2_final - avg_i_final * avg_i_final } else { 0.0 },
            min_hoelder_margin,
            max_state_residual,
            max_log_residual,
        };
        record.slope_endpoint = slope_endpoint(&record);
        record.slope_regression = slope_regression(&record).ok();
        record
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("a path always holds its initial sample")
    }

    pub fn final_i(&self) -> f64 {
        self.final_sample().i
    }

    /// More than 1% of the steps were clamped.
    pub fn unreliable(&self) -> bool {
        self.steps > 0 && self.clamp_count as f64 > MAX_CLAMP_FRACTION * self.steps as f64
    }

    pub fn scheme(&self) -> SchemeKind {
        self.config.scheme
    }

    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        let tol = 1e-12 * t.abs().max(1.0);
        self.samples.iter().find(|s| (s.t - t).abs() <= tol)
    }
}

/// `sum_x / t`.
pub fn running_average(sum_x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(sum_x / t)
}

fn psi_at(s: &Sample, p: &ModelParams) -> f64 {
    let bt = p.beta * s.t;
    (p.i0 - s.i) / bt + (s.mart_state + s.shift_state) / bt
}

/// `ψ(t) = (I(0) − I(t))/(βt) + (σ/(βt)) Σ (N − I_k) I_k ΔB_k` at a recorded time.
pub fn psi(path: &PathRecord, p: &ModelParams, at_t: f64) -> Result<f64> {
    if !(at_t > 0.0) || at_t > path.t_stop * (1.0 + 1e-12) {
        return Err(Error::NoSample(at_t));
    }
    let s = path.sample_at(at_t).ok_or(Error::NoSample(at_t))?;
    Ok(psi_at(s, p))
}

fn hoelder_margin_at(s: &Sample) -> f64 {
    let a = s.sum_i / s.t;
    s.sum_i2 / s.t - a * a
}

/// Relative residual of `⟨I²⟩ = (N − (μ+γ)/β)⟨I⟩ + ψ` at one sample.
///
/// Evaluated in the equivalent integrated form
/// `I(t) − I(0) = (βN−μ−γ) Σ I_k Δt − β Σ I_k² Δt + Σ σ(N−I_k) I_k ΔB_k`,
/// which differs from the averaged form by the common factor `βt`.
pub fn state_identity_residual(s: &Sample, p: &ModelParams) -> f64 {
    if s.t <= 0.0 {
        return 0.0;
    }
    let linear = p.growth_rate() * s.sum_i;
    let quadratic = p.beta * s.sum_i2;
    let lhs = s.i - p.i0;
    let rhs = linear - quadratic + s.mart_state + s.shift_state;
    let scale = s.i.abs() + p.i0.abs() + linear.abs() + quadratic.abs() + s.mart_state.abs() + s.shift_state.abs();
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Relative residual of
/// `log I(t) − log I(0) = Σ log_drift(I_k) Δt + σ Σ (N − I_k) ΔB_k` at one sample,
/// with the drift sum expanded in terms of `Σ I_k Δt` and `Σ I_k² Δt`.
pub fn log_identity_residual(s: &Sample, p: &ModelParams) -> f64 {
    if s.t <= 0.0 {
        return 0.0;
    }
    let s2 = p.sigma2();
    let constant = p.small_i_exponent() * s.t;
    let linear = (s2 * p.capacity - p.beta) * s.sum_i;
    let quadratic = 0.5 * s2 * s.sum_i2;
    let lhs = s.log_i - p.i0.ln();
    let rhs = constant + linear - quadratic + s.mart_log + s.shift_log;
    let scale = s.log_i.abs()
        + p.i0.ln().abs()
        + constant.abs()
        + linear.abs()
        + quadratic.abs()
        + s.mart_log.abs()
        + s.shift_log.abs();
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// `log(I(t_stop)/I(0)) / t_stop`, or `log(eps/I(0)) / τ` for an extinct path.
pub fn slope_endpoint(path: &PathRecord) -> f64 {
    if !(path.t_stop > 0.0) {
        return 0.0;
    }
    let end = if path.extinct { path.extinction_eps.ln() } else { path.final_sample().log_i };
    (end - path.params.i0.ln()) / path.t_stop
}

/// Least-squares slope of `log I` over the samples in `[t_stop/2, t_stop]`.
pub fn slope_regression(path: &PathRecord) -> Result<f64> {
    let half = 0.5 * path.t_stop;
    let pts: Vec<(f64, f64)> =
        path.samples.iter().filter(|s| s.t >= half && s.t > 0.0).map(|s| (s.t, s.log_i)).collect();
    ols_slope(&pts)
}

pub(crate) fn ols_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < MIN_REGRESSION_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_REGRESSION_SAMPLES, have: pts.len() });
    }
    let n = pts.len() as f64;
    let tx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ty = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in pts {
        sxy += (x - tx) * (y - ty);
        sxx += (x - tx) * (x - tx);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples { needed: MIN_REGRESSION_SAMPLES, have: 1 });
    }
    Ok(sxy / sxx)
}

/// The three terms of
/// `log I(t)/t = (βN−μ−γ−σ²N²/2) + [(σ²/2)(N+(μ+γ)/β) − β]⟨I⟩ + Ψ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeDecomposition {
    pub t: f64,
    /// `βN − μ − γ − σ²N²/2`.
    pub constant: f64,
    /// `[(σ²/2)(N + (μ+γ)/β) − β] ⟨I⟩`.
    pub coefficient_term: f64,
    /// `Ψ(t) = log I(0)/t + (σ/t) Σ (N−I_k) ΔB_k − (σ²/2) ψ`, plus any clamp
    /// displacement divided by `t`.
    pub big_psi: f64,
    /// The `ψ` used inside `Ψ`: `⟨I²⟩ − (N − (μ+γ)/β)⟨I⟩`.
    pub psi: f64,
    /// `ψ` from its martingale form; see [`psi`].
    pub psi_martingale: f64,
    /// `log I(t) / t`.
    pub log_slope: f64,
}

impl SlopeDecomposition {
    pub fn sum(&self) -> f64 {
        self.constant + self.coefficient_term + self.big_psi
    }

    /// `|sum − log I(t)/t|` relative to the largest term.
    pub fn relative_gap(&self) -> f64 {
        if !(self.t > 0.0) {
            return 0.0;
        }
        let scale =
            self.log_slope.abs().max(self.constant.abs()).max(self.coefficient_term.abs()).max(self.big_psi.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.sum() - self.log_slope).abs() / scale
        }
    }
}

/// Evaluate the slope decomposition at `t_stop`.
///
/// `ψ` inside `Ψ` is taken as `⟨I²⟩ − (N − (μ+γ)/β)⟨I⟩`, the value the state
/// identity assigns it. The decomposition then reproduces `log I(t)/t`
/// exactly whenever the log identity holds, i.e. on Euler–Maruyama log paths.
/// `psi_martingale` carries the closed-form `ψ` for comparison; the two agree
/// to rounding on Euler–Maruyama state paths.
pub fn slope_decomposition(path: &PathRecord, p: &ModelParams) -> SlopeDecomposition {
    let s = path.final_sample();
    if !(s.t > 0.0) {
        return SlopeDecomposition {
            t: 0.0,
            constant: p.small_i_exponent(),
            coefficient_term: 0.0,
            big_psi: 0.0,
            psi: 0.0,
            psi_martingale: 0.0,
            log_slope: 0.0,
        };
    }
    let t = s.t;
    let s2 = p.sigma2();
    let avg_i = s.sum_i / t;
    let avg_i2 = s.sum_i2 / t;
    let psi = avg_i2 - p.carrying_level() * avg_i;
    let coefficient = 0.5 * s2 * (p.capacity + p.removal_rate() / p.beta) - p.beta;
    SlopeDecomposition {
        t,
        constant: p.small_i_exponent(),
        coefficient_term: coefficient * avg_i,
        big_psi: (p.i0.ln() + s.mart_log + s.shift_log) / t - 0.5 * s2 * psi,
        psi,
        psi_martingale: psi_at(s, p),
        log_slope: s.log_i / t,
    }
}

/// First sample time with `i ≤ eps`.
pub fn detect_extinction(samples: &[Sample], eps: f64) -> Option<f64> {
    samples.iter().find(|s| s.i <= eps).map(|s| s.t)
}

/// FNV-1a over the bit patterns of every input that determines a path.
pub fn params_hash(p: &ModelParams, cfg: &SchemeConfig, key: StreamKey) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let words = [
        p.beta.to_bits(),
        p.gamma.to_bits(),
        p.mu.to_bits(),
        p.sigma.to_bits(),
        p.capacity.to_bits(),
        p.i0.to_bits(),
        cfg.scheme as u64,
        cfg.dt.to_bits(),
        cfg.t_end.to_bits(),
        cfg.clamp_eps.to_bits(),
        cfg.extinction_eps(p).to_bits(),
        cfg.record_stride(),
        key.seed,
        key.stream,
    ];
    let mut h = OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}
