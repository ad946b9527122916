//! Finite-ensemble, finite-horizon checks of the extinction-rate and
//! time-average bounds, plus the closed-form noise-free solution.

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleReport;
use crate::error::{Error, Result};
use crate::model::{ModelParams, TheoremCase};
use crate::sde::SchemeKind;

pub const DEFAULT_TOL_CASE_ONE: f64 = 0.25;
pub const DEFAULT_TOL_CASE_TWO: f64 = 0.1;
pub const DEFAULT_TOL_LEMMA: f64 = 0.05;
pub const DEFAULT_TOL_IDENTITY: f64 = 1e-8;
pub const DEFAULT_TOL_DECOMPOSITION: f64 = 1e-6;
/// Rounding slack for `⟨I⟩² ≤ ⟨I²⟩`, as a multiple of `N²`.
pub const HOELDER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check_name: String,
    pub predicted: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

/// Compare the ensemble log-slope against the rate bound.
///
/// Case I is checked two-sided because its bound equals the small-I
/// exponent; case II only one-sided on the 95% quantile.
pub fn check_theorem(p: &ModelParams, report: &EnsembleReport, tol_rel: f64) -> Result<Verdict> {
    let regime = p.classify()?;
    if regime.r0s >= 1.0 {
        return Err(Error::NotApplicable(format!("rate bound requires R0S < 1, got {}", regime.r0s)));
    }
    let bound = regime.rate_bound;
    Ok(match regime.theorem_case {
        TheoremCase::CaseI => {
            let tolerance = tol_rel * bound.abs() + 3.0 * report.slope_stderr;
            let gap = (report.slope_mean - bound).abs();
            Verdict {
                check_name: "theorem_case_one_rate".into(),
                predicted: bound,
                measured: report.slope_mean,
                tolerance,
                pass: gap <= tolerance,
                detail: format!(
                    "|slope_mean - bound| = {gap:.6e} vs tol_rel*|bound| + 3*stderr (stderr {:.6e})",
                    report.slope_stderr
                ),
            }
        }
        TheoremCase::CaseII => {
            let limit = bound * (1.0 - tol_rel);
            let q95 = report.slope_quantiles.p95;
            Verdict {
                check_name: "theorem_case_two_bound".into(),
                predicted: bound,
                measured: q95,
                tolerance: tol_rel,
                pass: q95 <= limit,
                detail: format!("95% slope quantile {q95:.6e} <= bound*(1 - tol_rel) = {limit:.6e}"),
            }
        }
    })
}

/// Compare the 95% quantile of per-path `⟨I(T)⟩` over the horizon against
/// the time-average bound. Extinct paths contribute their threshold after
/// stopping.
pub fn check_lemma(p: &ModelParams, report: &EnsembleReport, tol_rel: f64) -> Result<Verdict> {
    let q95 = report.avg_i_quantiles()?.p95;
    let threshold = p.removal_rate() / p.beta;
    Ok(if p.capacity <= threshold {
        let limit = tol_rel * p.capacity;
        Verdict {
            check_name: "lemma_average_vanishes".into(),
            predicted: 0.0,
            measured: q95,
            tolerance: limit,
            pass: q95 <= limit,
            detail: format!("95% quantile of <I> {q95:.6e} <= tol_rel*N = {limit:.6e}"),
        }
    } else {
        let bound = p.carrying_level();
        let limit = bound * (1.0 + tol_rel);
        Verdict {
            check_name: "lemma_average_bound".into(),
            predicted: bound,
            measured: q95,
            tolerance: tol_rel,
            pass: q95 <= limit,
            detail: format!("95% quantile of <I> {q95:.6e} <= (N - (mu+gamma)/beta)(1 + tol_rel) = {limit:.6e}"),
        }
    })
}

/// The state integral identity is exact on Euler–Maruyama state paths.
pub fn check_identity(report: &EnsembleReport, tol: f64) -> Result<Verdict> {
    if report.scheme != SchemeKind::EulerMaruyamaState {
        return Err(Error::NotApplicable(format!(
            "state identity is exact only for em-state paths; {} residual is {:.3e}",
            report.scheme, report.max_identity_residual
        )));
    }
    Ok(Verdict {
        check_name: "state_identity".into(),
        predicted: 0.0,
        measured: report.max_identity_residual,
        tolerance: tol,
        pass: report.max_identity_residual <= tol,
        detail: "max relative residual over paths and samples".into(),
    })
}

/// The slope decomposition reproduces `log I(t)/t` on Euler–Maruyama log paths.
pub fn check_decomposition(report: &EnsembleReport, tol: f64) -> Result<Verdict> {
    if report.scheme != SchemeKind::EulerMaruyamaLog {
        return Err(Error::NotApplicable(format!(
            "slope decomposition is exact only for em-log paths; {} gap is {:.3e}",
            report.scheme, report.max_decomposition_gap
        )));
    }
    Ok(Verdict {
        check_name: "slope_decomposition".into(),
        predicted: 0.0,
        measured: report.max_decomposition_gap,
        tolerance: tol,
        pass: report.max_decomposition_gap <= tol,
        detail: "max relative gap between the three terms and log I(t)/t".into(),
    })
}

/// `|mean of (σ/t) Σ (N − I_k) ΔB_k| ≤ 3 · stderr`.
pub fn check_martingale(report: &EnsembleReport) -> Verdict {
    let tolerance = 3.0 * report.mart_stderr;
    Verdict {
        check_name: "martingale_mean".into(),
        predicted: 0.0,
        measured: report.mart_mean,
        tolerance,
        pass: report.mart_mean.abs() <= tolerance,
        detail: format!("|mart_mean| <= 3*stderr (stderr {:.6e})", report.mart_stderr),
    }
}

/// `⟨I⟩² ≤ ⟨I²⟩` at every recorded sample, up to `1e-9·N²`.
pub fn check_hoelder(p: &ModelParams, report: &EnsembleReport) -> Verdict {
    let slack = HOELDER_SLACK * p.capacity * p.capacity;
    Verdict {
        check_name: "hoelder".into(),
        predicted: 0.0,
        measured: report.min_hoelder_margin,
        tolerance: slack,
        pass: report.min_hoelder_margin >= -slack,
        detail: "min over samples of <I^2> - <I>^2".into(),
    }
}

/// Every check that applies to this parameter set and scheme, at the default
/// tolerances.
pub fn run_all(p: &ModelParams, report: &EnsembleReport) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let regime = p.classify()?;
    if regime.r0s < 1.0 {
        let tol = match regime.theorem_case {
            TheoremCase::CaseI => DEFAULT_TOL_CASE_ONE,
            TheoremCase::CaseII => DEFAULT_TOL_CASE_TWO,
        };
        out.push(check_theorem(p, report, tol)?);
    }
    out.push(check_lemma(p, report, DEFAULT_TOL_LEMMA)?);
    match report.scheme {
        SchemeKind::EulerMaruyamaState => out.push(check_identity(report, DEFAULT_TOL_IDENTITY)?),
        SchemeKind::EulerMaruyamaLog => out.push(check_decomposition(report, DEFAULT_TOL_DECOMPOSITION)?),
        SchemeKind::Milstein => {}
    }
    if p.sigma > 0.0 {
        out.push(check_martingale(report));
    }
    out.push(check_hoelder(p, report));
    Ok(out)
}

/// Closed-form solution of the noise-free logistic equation
/// `dI/dt = r I − β I²`, `r = βN − μ − γ`.
pub fn logistic_reference(p: &ModelParams, t: f64) -> Result<f64> {
    if p.sigma != 0.0 {
        return Err(Error::NotApplicable(format!("closed form requires sigma = 0, got {}", p.sigma)));
    }
    let r = p.growth_rate();
    let (b, i0) = (p.beta, p.i0);
    if t == 0.0 {
        return Ok(i0);
    }
    Ok(if r > 0.0 {
        // r I0 / (r e^{-rt} + β I0 (1 − e^{-rt}))
        let decay = (-r * t).exp();
        r * i0 / (r * decay - b * i0 * (-r * t).exp_m1())
    } else if r < 0.0 {
        r * i0 * (r * t).exp() / (r + b * i0 * (r * t).exp_m1())
    } else {
        i0 / (1.0 + b * i0 * t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{aggregate, EnsembleReport, PathSummary};

    fn p_case_one() -> ModelParams {
        ModelParams::with_sigma2(1.0, 20.0, 20.0, 0.0121, 100.0, 50.0).unwrap()
    }

    fn report_with(p: &ModelParams, scheme: SchemeKind, slopes: &[f64], avgs: &[f64]) -> EnsembleReport {
        let summaries = slopes
            .iter()
            .zip(avgs)
            .enumerate()
            .map(|(k, (&s, &a))| PathSummary {
                path_index: k as u64,
                seed: 0,
                extinct: true,
                t_stop: 1.0,
                slope_endpoint: s,
                slope_regression: None,
                avg_i: a,
                avg_i2: a * a,
                psi: 0.0,
                mart_state_over_t: 0.0,
                mart_log_over_t: 0.0,
                avg_i_horizon: a,
                mart_log_over_horizon: 0.0,
                clamp_count: 0,
                unreliable: false,
                identity_residual: 0.0,
                log_identity_residual: 0.0,
                decomposition_gap: 0.0,
                min_hoelder_margin: 0.0,
                samples: None,
            })
            .collect();
        EnsembleReport::from_aggregate(p.classify().unwrap(), scheme, aggregate(summaries).unwrap())
    }

    #[test]
    fn exact_prediction_passes_with_zero_margin() {
        let p = p_case_one();
        let bound = p.classify().unwrap().rate_bound;
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[bound; 4], &[1.0; 4]);
        let v = check_theorem(&p, &r, 0.0).unwrap();
        assert!(v.pass);
        assert_eq!(v.tolerance, 0.0);
    }

    #[test]
    fn theorem_rejects_persistent_regime() {
        let p = ModelParams::new(1.0, 20.0, 20.0, 0.03, 100.0, 10.0).unwrap();
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[0.0], &[1.0]);
        assert!(matches!(check_theorem(&p, &r, 0.25), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn case_two_is_one_sided() {
        let p = ModelParams::with_sigma2(1.0, 20.0, 20.0, 0.02, 100.0, 10.0).unwrap();
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[-40.0, -38.0, -36.0], &[1.0; 3]);
        assert!(check_theorem(&p, &r, 0.1).unwrap().pass);
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[-15.0, -14.0], &[1.0; 2]);
        assert!(!check_theorem(&p, &r, 0.1).unwrap().pass);
    }

    #[test]
    fn lemma_exact_bound_passes_at_zero_tolerance() {
        let p = ModelParams::new(1.0, 20.0, 20.0, 0.03, 100.0, 10.0).unwrap();
        let r = report_with(&p, SchemeKind::EulerMaruyamaState, &[0.0; 3], &[60.0; 3]);
        assert!(check_lemma(&p, &r, 0.0).unwrap().pass);
        let r = report_with(&p, SchemeKind::EulerMaruyamaState, &[0.0; 3], &[60.5; 3]);
        assert!(!check_lemma(&p, &r, 0.0).unwrap().pass);
        assert!(check_lemma(&p, &r, 0.05).unwrap().pass);
    }

    #[test]
    fn lemma_vanishing_branch() {
        let p = ModelParams::new(0.3, 20.0, 20.0, 0.05, 100.0, 50.0).unwrap();
        let r = report_with(&p, SchemeKind::EulerMaruyamaState, &[0.0; 2], &[4.0, 5.0]);
        let v = check_lemma(&p, &r, 0.05).unwrap();
        assert_eq!(v.check_name, "lemma_average_vanishes");
        assert!(v.pass);
    }

    #[test]
    fn identity_only_for_state_scheme() {
        let p = p_case_one();
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[0.0], &[1.0]);
        assert!(check_identity(&r, 1e-8).is_err());
        let r = report_with(&p, SchemeKind::EulerMaruyamaState, &[0.0], &[1.0]);
        assert!(check_identity(&r, 1e-8).unwrap().pass);
        assert!(check_decomposition(&r, 1e-6).is_err());
    }

    #[test]
    fn tolerance_monotone() {
        let p = p_case_one();
        let r = report_with(&p, SchemeKind::EulerMaruyamaLog, &[-0.6, -0.7, -0.65], &[5.0, 61.0, 70.0]);
        let mut passed_theorem = false;
        let mut passed_lemma = false;
        for k in 0..200 {
            let tol = k as f64 * 0.01;
            let t = check_theorem(&p, &r, tol).unwrap().pass;
            let l = check_lemma(&p, &r, tol).unwrap().pass;
            assert!(!passed_theorem || t);
            assert!(!passed_lemma || l);
            passed_theorem |= t;
            passed_lemma |= l;
        }
        assert!(passed_theorem && passed_lemma);
    }

    #[test]
    fn logistic_examples() {
        let p = ModelParams::new(1.0, 20.0, 20.0, 0.0, 100.0, 10.0).unwrap();
        assert_eq!(logistic_reference(&p, 0.0).unwrap(), 10.0);
        assert!((logistic_reference(&p, 1e6).unwrap() - 60.0).abs() < 1e-12);
        let q = ModelParams::new(0.3, 20.0, 20.0, 0.0, 100.0, 10.0).unwrap();
        assert!(logistic_reference(&q, 1e3).unwrap().abs() < 1e-100);
        let noisy = ModelParams { sigma: 0.1, ..p };
        assert!(logistic_reference(&noisy, 1.0).is_err());
        // r = 0: I0 / (1 + β I0 t)
        let z = ModelParams::new(0.4, 20.0, 20.0, 0.0, 100.0, 10.0).unwrap();
        assert!((logistic_reference(&z, 2.0).unwrap() - 10.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn logistic_solves_the_ode() {
        // Central differences against the drift over t ∈ [0, 10].
        for (beta, i0) in [(1.0, 10.0), (0.3, 50.0), (0.4, 5.0), (2.0, 99.0)] {
            let p = ModelParams::new(beta, 20.0, 20.0, 0.0, 100.0, i0).unwrap();
            let h = 1e-6;
            for k in 1..1000 {
                let t = k as f64 * 0.01;
                let d = (logistic_reference(&p, t + h).unwrap() - logistic_reference(&p, t - h).unwrap()) / (2.0 * h);
                let f = p.drift(logistic_reference(&p, t).unwrap());
                assert!((d - f).abs() <= 1e-6 * p.capacity, "beta={beta} t={t}: {d} vs {f}");
            }
        }
    }
}
