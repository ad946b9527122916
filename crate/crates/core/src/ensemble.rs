//! Parallel Monte Carlo over independent paths.
//!
//! Path `k` draws from stream `(base_seed, k)`. Results are collected in index
//! order and aggregated after every path has finished, so the report does not
//! depend on the worker count or on completion order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RegimeReport};
use crate::pathstats::{slope_decomposition, PathRecord, Sample};
use crate::sde::{integrate, SchemeConfig, SchemeKind, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: u64,
    pub base_seed: u64,
    /// Worker-count hint; does not affect results.
    pub max_workers: usize,
}

impl EnsembleConfig {
    pub fn new(n_paths: u64, base_seed: u64) -> Self {
        let max_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self { n_paths, base_seed, max_workers }
    }

    pub fn with_workers(mut self, max_workers: usize) -> Self {
        self.max_workers = max_workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::invalid("n_paths must be >= 1"));
        }
        if self.max_workers < 1 {
            return Err(Error::invalid("max_workers must be >= 1"));
        }
        Ok(())
    }
}

/// Per-path statistics kept by an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_index: u64,
    pub seed: u64,
    pub extinct: bool,
    pub t_stop: f64,
    pub slope_endpoint: f64,
    pub slope_regression: Option<f64>,
    pub avg_i: f64,
    pub avg_i2: f64,
    pub psi: f64,
    pub mart_state_over_t: f64,
    pub mart_log_over_t: f64,
    /// `⟨I⟩` over the whole horizon, holding an extinct path at its threshold
    /// after the stopping time. Equals `avg_i` for surviving paths.
    pub avg_i_horizon: f64,
    /// `Σ σ (N − I_k) ΔB_k` at the stopping time divided by the horizon. A
    /// stopped martingale over a fixed time, so its mean is zero even when
    /// paths stop early.
    pub mart_log_over_horizon: f64,
    pub clamp_count: u64,
    /// More than 1% of steps were clamped.
    pub unreliable: bool,
    pub identity_residual: f64,
    pub log_identity_residual: f64,
    pub decomposition_gap: f64,
    pub min_hoelder_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Sample>>,
}

impl PathSummary {
    pub fn from_record(path_index: u64, record: &PathRecord, keep_samples: bool) -> Self {
        let last = record.final_sample();
        let over_t = |x: f64| if record.t_stop > 0.0 { x / record.t_stop } else { 0.0 };
        let horizon = record.config.t_end;
        let avg_i_horizon = if record.extinct {
            (last.sum_i + record.extinction_eps * (horizon - record.t_stop)) / horizon
        } else {
            record.avg_i_final
        };
        PathSummary {
            path_index,
            seed: record.key.seed,
            extinct: record.extinct,
            t_stop: record.t_stop,
            slope_endpoint: record.slope_endpoint,
            slope_regression: record.slope_regression,
            avg_i: record.avg_i_final,
            avg_i2: record.avg_i2_final,
            psi: record.psi_final,
            mart_state_over_t: over_t(last.mart_state),
            mart_log_over_t: over_t(last.mart_log),
            avg_i_horizon,
            mart_log_over_horizon: last.mart_log / horizon,
            clamp_count: record.clamp_count,
            unreliable: record.unreliable(),
            identity_residual: record.max_state_residual,
            log_identity_residual: record.max_log_residual,
            decomposition_gap: slope_decomposition(record, &record.params).relative_gap(),
            min_hoelder_margin: record.min_hoelder_margin,
            samples: keep_samples.then(|| record.samples.clone()),
        }
    }
}

/// Five-point quantile summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Quantiles {
            p05: quantile_sorted(&v, 0.05)?,
            p25: quantile_sorted(&v, 0.25)?,
            p50: quantile_sorted(&v, 0.50)?,
            p75: quantile_sorted(&v, 0.75)?,
            p95: quantile_sorted(&v, 0.95)?,
        })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.p05, self.p25, self.p50, self.p75, self.p95]
    }
}

/// Linear interpolation between order statistics at rank `(n−1)q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// The statistics of an [`EnsembleReport`] that depend only on the summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n_paths: u64,
    pub extinct_fraction: f64,
    pub slope_mean: f64,
    pub slope_stderr: f64,
    pub slope_quantiles: Quantiles,
    pub avg_i_mean: f64,
    pub mart_mean: f64,
    pub mart_stderr: f64,
    pub max_identity_residual: f64,
    pub max_log_identity_residual: f64,
    pub max_decomposition_gap: f64,
    pub min_hoelder_margin: f64,
    pub unreliable_paths: u64,
    pub per_path: Vec<PathSummary>,
}

/// Fold the summaries in path-index order.
pub fn aggregate(mut summaries: Vec<PathSummary>) -> Result<Aggregate> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    summaries.sort_by_key(|s| s.path_index);
    let slopes: Vec<f64> = summaries.iter().map(|s| s.slope_endpoint).collect();
    let marts: Vec<f64> = summaries.iter().map(|s| s.mart_log_over_horizon).collect();
    let (slope_mean, slope_stderr) = mean_stderr(&slopes)?;
    let (mart_mean, mart_stderr) = mean_stderr(&marts)?;
    let n = summaries.len() as f64;
    let fold_max = |f: fn(&PathSummary) -> f64| summaries.iter().map(f).fold(0.0f64, f64::max);
    Ok(Aggregate {
        n_paths: summaries.len() as u64,
        extinct_fraction: summaries.iter().filter(|s| s.extinct).count() as f64 / n,
        slope_mean,
        slope_stderr,
        slope_quantiles: Quantiles::of(&slopes)?,
        avg_i_mean: summaries.iter().map(|s| s.avg_i).sum::<f64>() / n,
        mart_mean,
        mart_stderr,
        max_identity_residual: fold_max(|s| s.identity_residual),
        max_log_identity_residual: fold_max(|s| s.log_identity_residual),
        max_decomposition_gap: fold_max(|s| s.decomposition_gap),
        min_hoelder_margin: summaries.iter().map(|s| s.min_hoelder_margin).fold(f64::INFINITY, f64::min),
        unreliable_paths: summaries.iter().filter(|s| s.unreliable).count() as u64,
        per_path: summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub regime: RegimeReport,
    pub scheme: SchemeKind,
    pub n_paths: u64,
    pub extinct_fraction: f64,
    pub slope_mean: f64,
    pub slope_stderr: f64,
    pub slope_quantiles: Quantiles,
    pub avg_i_mean: f64,
    /// Mean over paths of `(σ/T) Σ (N − I_k) ΔB_k`, the sum taken up to the
    /// stopping time and `T` the horizon.
    pub mart_mean: f64,
    pub mart_stderr: f64,
    /// Largest relative residual of the state identity, over paths and samples.
    pub max_identity_residual: f64,
    pub max_log_identity_residual: f64,
    pub max_decomposition_gap: f64,
    pub min_hoelder_margin: f64,
    pub unreliable_paths: u64,
    pub per_path: Vec<PathSummary>,
}

impl EnsembleReport {
    pub fn from_aggregate(regime: RegimeReport, scheme: SchemeKind, a: Aggregate) -> Self {
        EnsembleReport {
            regime,
            scheme,
            n_paths: a.n_paths,
            extinct_fraction: a.extinct_fraction,
            slope_mean: a.slope_mean,
            slope_stderr: a.slope_stderr,
            slope_quantiles: a.slope_quantiles,
            avg_i_mean: a.avg_i_mean,
            mart_mean: a.mart_mean,
            mart_stderr: a.mart_stderr,
            max_identity_residual: a.max_identity_residual,
            max_log_identity_residual: a.max_log_identity_residual,
            max_decomposition_gap: a.max_decomposition_gap,
            min_hoelder_margin: a.min_hoelder_margin,
            unreliable_paths: a.unreliable_paths,
            per_path: a.per_path,
        }
    }

    pub fn avg_i_quantiles(&self) -> Result<Quantiles> {
        let v: Vec<f64> = self.per_path.iter().map(|s| s.avg_i_horizon).collect();
        Quantiles::of(&v)
    }
}

pub fn run_ensemble(p: &ModelParams, cfg: &SchemeConfig, ec: &EnsembleConfig) -> Result<EnsembleReport> {
    run_ensemble_with(p, cfg, ec, false)
}

/// As [`run_ensemble`]; `keep_samples` retains every path's sample series.
pub fn run_ensemble_with(
    p: &ModelParams,
    cfg: &SchemeConfig,
    ec: &EnsembleConfig,
    keep_samples: bool,
) -> Result<EnsembleReport> {
    let regime = p.classify()?;
    cfg.validate(p)?;
    ec.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ec.max_workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let summaries: Vec<PathSummary> = pool.install(|| {
        (0..ec.n_paths)
            .into_par_iter()
            .map(|k| {
                let record = integrate(p, cfg, StreamKey::new(ec.base_seed, k))?;
                Ok(PathSummary::from_record(k, &record, keep_samples))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(EnsembleReport::from_aggregate(regime, cfg.scheme, aggregate(summaries)?))
}
