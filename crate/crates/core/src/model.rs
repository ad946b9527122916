//! Model parameters, SDE coefficients and the extinction-regime classifier.
//!
//! The infected count `I` evolves on `(0, N)` as
//!
//! ```text
//! dI = [(βN − μ − γ) I − β I²] dt + σ (N − I) I dB
//! ```
//!
//! which is the one-dimensional reduction of the two-compartment SIS system
//! under the conservation law `S + I ≡ N`. All quantities are in absolute
//! individuals; `N` is not normalized to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five SDE constants plus the initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Transmission coefficient (1 / (individual · time)).
    pub beta: f64,
    /// Cure rate (1 / time).
    pub gamma: f64,
    /// Per-capita death rate (1 / time).
    pub mu: f64,
    /// Noise intensity; `sigma²` is the variance rate.
    pub sigma: f64,
    /// Total population `N`.
    pub capacity: f64,
    /// Initial infected count, strictly inside `(0, capacity)`.
    pub i0: f64,
}

impl ModelParams {
    pub fn new(beta: f64, gamma: f64, mu: f64, sigma: f64, capacity: f64, i0: f64) -> Result<Self> {
        let p = Self { beta, gamma, mu, sigma, capacity, i0 };
        p.validate()?;
        Ok(p)
    }

    /// Same as [`ModelParams::new`] but takes the variance rate `σ²`.
    pub fn with_sigma2(beta: f64, gamma: f64, mu: f64, sigma2: f64, capacity: f64, i0: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        Self::new(beta, gamma, mu, sigma2.sqrt(), capacity, i0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta, self.gamma, self.mu, self.sigma, self.capacity, self.i0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("all parameters must be finite"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.capacity > 0.0) {
            return Err(Error::invalid(format!("capacity must be > 0, got {}", self.capacity)));
        }
        if !(self.i0 > 0.0 && self.i0 < self.capacity) {
            return Err(Error::invalid(format!(
                "i0 must lie in (0, capacity) = (0, {}), got {}",
                self.capacity, self.i0
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `μ + γ`, the total exit rate from the infected class.
    #[inline]
    pub fn removal_rate(&self) -> f64 {
        self.mu + self.gamma
    }

    /// Deterministic logistic growth rate `βN − μ − γ`.
    #[inline]
    pub fn growth_rate(&self) -> f64 {
        self.beta * self.capacity - self.removal_rate()
    }

    /// `N − (μ+γ)/β`: the logistic carrying capacity, negative when the
    /// deterministic model dies out.
    #[inline]
    pub fn carrying_level(&self) -> f64 {
        self.capacity - self.removal_rate() / self.beta
    }

    /// Exponent of `log I` as `I → 0`: `βN − μ − γ − σ²N²/2`.
    #[inline]
    pub fn small_i_exponent(&self) -> f64 {
        self.growth_rate() - 0.5 * self.sigma2() * self.capacity * self.capacity
    }

    #[inline]
    pub fn drift(&self, i: f64) -> f64 {
        self.growth_rate() * i - self.beta * i * i
    }

    #[inline]
    pub fn diffusion(&self, i: f64) -> f64 {
        self.sigma * (self.capacity - i) * i
    }

    /// Derivative of [`ModelParams::diffusion`] with respect to `i`.
    #[inline]
    pub fn diffusion_slope(&self, i: f64) -> f64 {
        self.sigma * (self.capacity - 2.0 * i)
    }

    /// Drift of `log I` after the Itô correction.
    #[inline]
    pub fn log_drift(&self, i: f64) -> f64 {
        let gap = self.capacity - i;
        self.growth_rate() - self.beta * i - 0.5 * self.sigma2() * gap * gap
    }

    /// Stochastic reproduction number `βN/(μ+γ) − σ²N²/(2(μ+γ))`.
    pub fn r0s(&self) -> f64 {
        let m = self.removal_rate();
        let n = self.capacity;
        self.beta * n / m - self.sigma2() * n * n / (2.0 * m)
    }

    pub fn theorem_case(&self) -> TheoremCase {
        let lhs = 0.5 * self.sigma2() * (self.capacity + self.removal_rate() / self.beta);
        if lhs <= self.beta || self.capacity <= self.removal_rate() / self.beta {
            TheoremCase::CaseI
        } else {
            TheoremCase::CaseII
        }
    }

    pub fn classify(&self) -> Result<RegimeReport> {
        self.validate()?;
        let r0s = self.r0s();
        let s2 = self.sigma2();
        let noise_floor = self.beta / self.capacity;
        let noise_ceiling = self.beta * self.beta / (2.0 * self.removal_rate());

        let critical = r0s == 1.0;
        let below = r0s < 1.0;
        let low_noise_extinction = below && s2 <= noise_floor;
        let high_noise_extinction = !critical && s2 > noise_floor.max(noise_ceiling);
        let conjecture_region = below && noise_floor < s2 && s2 <= noise_ceiling;

        let theorem_case = self.theorem_case();
        let m_over_b = self.removal_rate() / self.beta;
        let rate_bound = match theorem_case {
            TheoremCase::CaseI => self.removal_rate() * (r0s - 1.0),
            TheoremCase::CaseII => -0.5 * s2 * m_over_b * m_over_b,
        };
        let average_bound = if self.capacity <= m_over_b { 0.0 } else { self.carrying_level() };

        Ok(RegimeReport {
            r0s,
            low_noise_extinction,
            high_noise_extinction,
            conjecture_region,
            persistence: r0s > 1.0,
            theorem_case,
            rate_bound,
            average_bound,
            deterministic: self.sigma == 0.0,
            critical,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremCase {
    /// Rate bound `(μ+γ)(R₀ˢ − 1)`, which is the exact small-I exponent.
    CaseI,
    /// One-sided rate bound `−(σ²/2)((μ+γ)/β)²`.
    CaseII,
}

/// Regime classification for one parameter set.
///
/// The theorem case and the extinction conditions are computed independently;
/// no flag is derived from another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub r0s: f64,
    /// `R₀ˢ < 1` and `σ² ≤ β/N`.
    pub low_noise_extinction: bool,
    /// `σ² > max(β/N, β²/(2(μ+γ)))`.
    pub high_noise_extinction: bool,
    /// `R₀ˢ < 1` and `β/N < σ² ≤ β²/(2(μ+γ))`.
    pub conjecture_region: bool,
    /// `R₀ˢ > 1`.
    pub persistence: bool,
    pub theorem_case: TheoremCase,
    /// Upper bound on `lim sup log I(t) / t`; negative means extinction.
    pub rate_bound: f64,
    /// Upper bound on `lim sup ⟨I(t)⟩`.
    pub average_bound: f64,
    /// `σ = 0`.
    pub deterministic: bool,
    /// `R₀ˢ == 1` exactly; neither extinction nor persistence is claimed.
    pub critical: bool,
}
