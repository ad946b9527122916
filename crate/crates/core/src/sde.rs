//! Brownian increments and the three stepping schemes.
//!
//! Every scheme updates the running functionals with the pre-step state
//! (left-endpoint Itô sums), so the integrated forms of the state and log
//! equations hold exactly on the discrete path of the matching scheme.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::pathstats::{PathRecord, Sample};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CLAMP_EPS: f64 = 1e-12;
/// Default extinction threshold as a fraction of `N`.
pub const DEFAULT_EXTINCTION_FRACTION: f64 = 1e-10;
/// Upper bound on stored samples per path when the stride is chosen automatically.
pub const MAX_AUTO_SAMPLES: u64 = 10_000;
/// Fraction of clamped steps above which a path is declared unreliable.
pub const MAX_CLAMP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Explicit Euler–Maruyama on `I`.
    #[serde(rename = "em-state")]
    EulerMaruyamaState,
    /// Euler–Maruyama on `log I`; positivity is structural.
    #[default]
    #[serde(rename = "em-log")]
    EulerMaruyamaLog,
    Milstein,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyamaState => "em-state",
            SchemeKind::EulerMaruyamaLog => "em-log",
            SchemeKind::Milstein => "milstein",
        }
    }

    /// Advance one step with the given Brownian increment.
    #[inline]
    pub fn step(self, s: &StepState, p: &ModelParams, dt: f64, dw: f64, clamp_eps: f64) -> StepState {
        match self {
            SchemeKind::EulerMaruyamaState => step_em_state(s, p, dt, dw, clamp_eps),
            SchemeKind::EulerMaruyamaLog => step_em_log(s, p, dt, dw, clamp_eps),
            SchemeKind::Milstein => step_milstein(s, p, dt, dw, clamp_eps),
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em-state" | "em_state" | "euler-maruyama-state" => Ok(SchemeKind::EulerMaruyamaState),
            "em-log" | "em_log" | "euler-maruyama-log" => Ok(SchemeKind::EulerMaruyamaLog),
            "milstein" => Ok(SchemeKind::Milstein),
            other => Err(Error::invalid(format!("unknown scheme '{other}' (expected em-state, em-log or milstein)"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Integrator settings. `extinction_eps` and `record_stride` fall back to
/// population- and horizon-dependent defaults when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub t_end: f64,
    pub clamp_eps: f64,
    pub extinction_eps: Option<f64>,
    pub record_stride: Option<u64>,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, dt: f64, t_end: f64) -> Self {
        Self { scheme, dt, t_end, clamp_eps: DEFAULT_CLAMP_EPS, extinction_eps: None, record_stride: None }
    }

    pub fn with_extinction_eps(mut self, eps: f64) -> Self {
        self.extinction_eps = Some(eps);
        self
    }

    pub fn with_record_stride(mut self, stride: u64) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn extinction_eps(&self, p: &ModelParams) -> f64 {
        self.extinction_eps.unwrap_or(DEFAULT_EXTINCTION_FRACTION * p.capacity)
    }

    /// Number of steps so that `n · dt ≥ t_end`.
    pub fn n_steps(&self) -> u64 {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            ratio.ceil() as u64
        }
    }

    pub fn record_stride(&self) -> u64 {
        self.record_stride.unwrap_or_else(|| self.n_steps().div_ceil(MAX_AUTO_SAMPLES).max(1))
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::invalid(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.dt < self.t_end) {
            return Err(Error::invalid(format!("dt must be < t_end ({} >= {})", self.dt, self.t_end)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 1e-3) {
            return Err(Error::invalid(format!("clamp_eps must lie in (0, 1e-3), got {}", self.clamp_eps)));
        }
        let eps = self.extinction_eps(p);
        if !(eps >= 0.0 && eps < p.i0) {
            return Err(Error::invalid(format!("extinction_eps must lie in [0, i0) = [0, {}), got {eps}", p.i0)));
        }
        if self.record_stride == Some(0) {
            return Err(Error::invalid("record_stride must be >= 1"));
        }
        Ok(())
    }
}

/// Identifies one independent random stream: the ensemble seed plus the path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// ChaCha8 keyed by the seed with the path index as the stream id.
    ///
    /// Distinct `(seed, stream)` pairs select distinct (key, nonce) pairs, so
    /// two paths can never share a stream.
    pub fn rng(self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(b"sis-path");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }
}

/// One `Normal(0, dt)` draw.
#[inline]
pub fn brownian_increment<R: rand_chacha::rand_core::Rng + ?Sized>(rng: &mut R, dt: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * dt.sqrt()
}

/// Integrator state plus the running left-endpoint sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    pub step: u64,
    pub t: f64,
    pub i: f64,
    /// `log i`. The log scheme integrates this directly, so it stays finite
    /// after `i` itself would underflow.
    pub log_i: f64,
    /// `Σ σ (N − I_k) I_k ΔB_k`.
    pub mart_state: f64,
    /// `Σ σ (N − I_k) ΔB_k`.
    pub mart_log: f64,
    /// `Σ I_k Δt`.
    pub sum_i: f64,
    /// `Σ I_k² Δt`.
    pub sum_i2: f64,
    /// Total displacement `clamped − raw` applied by state-space clamps.
    pub shift_state: f64,
    /// Total displacement applied to `log i` by log-scheme clamps.
    pub shift_log: f64,
    pub clamp_count: u64,
}

impl StepState {
    pub fn initial(i0: f64) -> Self {
        Self {
            step: 0,
            t: 0.0,
            i: i0,
            log_i: i0.ln(),
            mart_state: 0.0,
            mart_log: 0.0,
            sum_i: 0.0,
            sum_i2: 0.0,
            shift_state: 0.0,
            shift_log: 0.0,
            clamp_count: 0,
        }
    }

    pub fn sample(&self) -> Sample {
        Sample {
            t: self.t,
            i: self.i,
            log_i: self.log_i,
            sum_i: self.sum_i,
            sum_i2: self.sum_i2,
            mart_state: self.mart_state,
            mart_log: self.mart_log,
            shift_state: self.shift_state,
            shift_log: self.shift_log,
        }
    }

    /// Accumulate the left-endpoint sums and advance the clock. `i` is left
    /// for the caller.
    #[inline]
    fn advance(&self, p: &ModelParams, dt: f64, dw: f64) -> StepState {
        let i = self.i;
        let gap = p.capacity - i;
        let step = self.step + 1;
        StepState {
            step,
            t: step as f64 * dt,
            i,
            log_i: self.log_i,
            mart_state: self.mart_state + p.sigma * gap * i * dw,
            mart_log: self.mart_log + p.sigma * gap * dw,
            sum_i: self.sum_i + i * dt,
            sum_i2: self.sum_i2 + i * i * dt,
            shift_state: self.shift_state,
            shift_log: self.shift_log,
            clamp_count: self.clamp_count,
        }
    }
}

#[inline]
fn clamp_into_domain(next: &mut StepState, raw: f64, capacity: f64, clamp_eps: f64) {
    let lo = clamp_eps * capacity;
    let hi = (1.0 - clamp_eps) * capacity;
    if raw.is_nan() {
        next.i = lo;
        next.clamp_count += 1;
    } else if raw < lo {
        next.i = lo;
        next.shift_state += lo - raw;
        next.clamp_count += 1;
    } else if raw > hi {
        next.i = hi;
        next.shift_state += hi - raw;
        next.clamp_count += 1;
    } else {
        next.i = raw;
    }
    next.log_i = next.i.ln();
}

/// Explicit Euler–Maruyama step on the state, clamped to `[εN, (1−ε)N]`.
#[inline]
pub fn step_em_state(s: &StepState, p: &ModelParams, dt: f64, dw: f64, clamp_eps: f64) -> StepState {
    let raw = s.i + p.drift(s.i) * dt + p.diffusion(s.i) * dw;
    let mut next = s.advance(p, dt, dw);
    clamp_into_domain(&mut next, raw, p.capacity, clamp_eps);
    next
}

/// Euler–Maruyama step on `log I`. Only the upper boundary can be crossed;
/// `i` is floored at the smallest normal float while `log_i` carries on.
#[inline]
pub fn step_em_log(s: &StepState, p: &ModelParams, dt: f64, dw: f64, clamp_eps: f64) -> StepState {
    let y = s.log_i + p.log_drift(s.i) * dt + p.sigma * (p.capacity - s.i) * dw;
    let raw = y.exp();
    let mut next = s.advance(p, dt, dw);
    if raw >= p.capacity {
        next.i = (1.0 - clamp_eps) * p.capacity;
        next.log_i = next.i.ln();
        next.shift_log += next.log_i - y;
        next.clamp_count += 1;
    } else {
        next.i = raw.max(f64::MIN_POSITIVE);
        next.log_i = y;
    }
    next
}

/// Euler–Maruyama plus the `½ b b' (ΔW² − Δt)` correction, with the same
/// clamping as [`step_em_state`].
#[inline]
pub fn step_milstein(s: &StepState, p: &ModelParams, dt: f64, dw: f64, clamp_eps: f64) -> StepState {
    let b = p.diffusion(s.i);
    let raw = s.i + p.drift(s.i) * dt + b * dw + 0.5 * b * p.diffusion_slope(s.i) * (dw * dw - dt);
    let mut next = s.advance(p, dt, dw);
    clamp_into_domain(&mut next, raw, p.capacity, clamp_eps);
    next
}

/// Integrate one path. Does not apply the clamp-fraction check; see
/// [`simulate_path`].
pub fn integrate(p: &ModelParams, cfg: &SchemeConfig, key: StreamKey) -> Result<PathRecord> {
    p.validate()?;
    cfg.validate(p)?;
    let mut rng = key.rng();
    integrate_with(p, cfg, key, |dt| brownian_increment(&mut rng, dt))
}

/// Integrate one path drawing increments from `noise`. Used directly for
/// coupled-path experiments where several schemes share one Brownian path.
pub fn integrate_with<F>(p: &ModelParams, cfg: &SchemeConfig, key: StreamKey, mut noise: F) -> Result<PathRecord>
where
    F: FnMut(f64) -> f64,
{
    p.validate()?;
    cfg.validate(p)?;
    let n_steps = cfg.n_steps();
    let stride = cfg.record_stride();
    let log_eps = cfg.extinction_eps(p).ln();
    let dt = cfg.dt;

    let capacity = usize::try_from(n_steps / stride + 2).unwrap_or(usize::MAX).min(1 << 20);
    let mut samples = Vec::with_capacity(capacity);
    let mut state = StepState::initial(p.i0);
    samples.push(state.sample());

    let mut extinct = false;
    while state.step < n_steps {
        let dw = noise(dt);
        state = cfg.scheme.step(&state, p, dt, dw, cfg.clamp_eps);
        if state.log_i <= log_eps {
            extinct = true;
            break;
        }
        if state.step.is_multiple_of(stride) {
            samples.push(state.sample());
        }
    }
    if samples.last().map(|s| s.t) != Some(state.t) {
        samples.push(state.sample());
    }

    Ok(PathRecord::finalize(*p, *cfg, key, samples, extinct, state.clamp_count, state.step))
}

/// Integrate one path on stream `(seed, 0)`, failing if more than 1% of
/// steps were clamped.
pub fn simulate_path(p: &ModelParams, cfg: &SchemeConfig, seed: u64) -> Result<PathRecord> {
    simulate_stream(p, cfg, StreamKey::new(seed, 0))
}

pub fn simulate_stream(p: &ModelParams, cfg: &SchemeConfig, key: StreamKey) -> Result<PathRecord> {
    let record = integrate(p, cfg, key)?;
    if record.unreliable() {
        return Err(Error::Unreliable { clamps: record.clamp_count, steps: record.steps });
    }
    Ok(record)
}
