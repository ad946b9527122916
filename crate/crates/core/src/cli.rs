//! Command-line front end: argument and config-file resolution, subcommand
//! dispatch, and CSV/JSON emission.
//!
//! Exit codes: 0 success, 1 invalid input, 2 verification failed, 3 I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble_with, EnsembleConfig, EnsembleReport, PathSummary};
use crate::error::Error;
use crate::model::{ModelParams, RegimeReport};
use crate::pathstats::{PathRecord, Sample};
use crate::sde::{integrate, SchemeConfig, SchemeKind, StreamKey, DEFAULT_CLAMP_EPS, DEFAULT_DT};
use crate::verify::{self, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const DEFAULT_T_END: f64 = 100.0;
pub const DEFAULT_PATHS: u64 = 100;
pub const SEED_ENV: &str = "SIS_SEED";

pub const CSV_HEADER: &str = "path_index,seed,extinct,t_stop,slope_endpoint,slope_regression,avg_i,avg_i2,psi,mart_state_over_t,mart_log_over_t,clamp_count";

#[derive(Debug, Parser)]
#[command(name = "sis", version, about = "Stochastic SIS epidemic SDE: simulate, classify and verify extinction rates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the regime classification for one parameter set.
    Classify(CommonArgs),
    /// Simulate one path and write its sample series.
    Simulate(SimulateArgs),
    /// Run an ensemble and write the aggregated report.
    Ensemble(CommonArgs),
    /// Run an ensemble and every applicable check; exits 2 if any check fails.
    Verify(CommonArgs),
    /// Classify (and optionally simulate) over a grid of sigma² and/or beta.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "sigma2")]
    pub sigma: Option<f64>,
    /// Variance rate σ²; mutually exclusive with --sigma.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    /// Total population N.
    #[arg(long, allow_negative_numbers = true)]
    pub capacity: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub i0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-end", allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub paths: Option<u64>,
    /// Base seed; falls back to $SIS_SEED, then the config file, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<SchemeKind>,
    #[arg(long = "extinction-eps", allow_negative_numbers = true)]
    pub extinction_eps: Option<f64>,
    #[arg(long = "clamp-eps", allow_negative_numbers = true)]
    pub clamp_eps: Option<f64>,
    #[arg(long = "record-stride")]
    pub record_stride: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Keep every path's sample series in ensemble output.
    #[arg(long = "dump-paths")]
    pub dump_paths: bool,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Stream index; reproduces path k of an ensemble with the same seed.
    #[arg(long = "path-index", default_value_t = 0)]
    pub path_index: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// σ² grid as start:stop:count.
    #[arg(long = "sigma2-grid", value_parser = parse_grid)]
    pub sigma2_grid: Option<Grid>,
    /// β grid as start:stop:count.
    #[arg(long = "beta-grid", value_parser = parse_grid)]
    pub beta_grid: Option<Grid>,
    /// Skip simulation; emit classification columns only.
    #[arg(long = "classify-only")]
    pub classify_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Inclusive linear grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|k| if k + 1 == self.count { self.stop } else { self.start + step * k as f64 }).collect()
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected start:stop:count, got '{s}'"));
    }
    let start: f64 = parts[0].trim().parse().map_err(|e| format!("bad grid start: {e}"))?;
    let stop: f64 = parts[1].trim().parse().map_err(|e| format!("bad grid stop: {e}"))?;
    let count: usize = parts[2].trim().parse().map_err(|e| format!("bad grid count: {e}"))?;
    if count == 0 {
        return Err("grid count must be >= 1".into());
    }
    Ok(Grid { start, stop, count })
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub scheme: SchemeConfig,
    pub ensemble: EnsembleConfig,
    pub output: OutputFormat,
    pub out_path: Option<PathBuf>,
    pub dump_paths: bool,
}

/// On-disk config: the [`RunConfig`] schema with every field optional.
/// `model.sigma2` is accepted as an alternative to `model.sigma`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: FileModel,
    #[serde(default)]
    pub scheme: FileScheme,
    #[serde(default)]
    pub ensemble: FileEnsemble,
    pub output: Option<OutputFormat>,
    pub out_path: Option<PathBuf>,
    pub dump_paths: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileModel {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma2: Option<f64>,
    pub capacity: Option<f64>,
    pub i0: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileScheme {
    pub scheme: Option<SchemeKind>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub clamp_eps: Option<f64>,
    pub extinction_eps: Option<f64>,
    pub record_stride: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEnsemble {
    pub n_paths: Option<u64>,
    pub base_seed: Option<u64>,
    pub max_workers: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    VerifyFailed,
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::VerifyFailed => EXIT_VERIFY_FAILED,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::VerifyFailed => f.write_str("verification failed"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => CliError::Io(e),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Parse argv into the subcommand. Help and version requests surface as
/// `Ok(Err(text))`.
pub fn parse_args<I, T>(argv: I) -> Result<Result<Cli, String>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(Ok(cli)),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Ok(Err(e.to_string())),
            _ => Err(CliError::Invalid(e.to_string())),
        },
    }
}

fn required(name: &str, flag: Option<f64>, file: Option<f64>) -> Result<f64, CliError> {
    flag.or(file).ok_or_else(|| CliError::Invalid(format!("missing --{name} (or model.{name} in --config)")))
}

impl CommonArgs {
    fn load_file(&self) -> Result<FileConfig, CliError> {
        match &self.config {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
            }
        }
    }

    /// Merge flags over the config file. `env_seed` is the raw `SIS_SEED`
    /// value, if set; `overrides` fills model fields supplied by a sweep grid.
    pub fn resolve(&self, env_seed: Option<&str>, overrides: ModelOverrides) -> Result<RunConfig, CliError> {
        let file = self.load_file()?;
        let fm = &file.model;

        let beta = overrides.beta.map(Ok).unwrap_or_else(|| required("beta", self.beta, fm.beta))?;
        let gamma = required("gamma", self.gamma, fm.gamma)?;
        let mu = required("mu", self.mu, fm.mu)?;
        let capacity = required("capacity", self.capacity, fm.capacity)?;
        let i0 = required("i0", self.i0, fm.i0)?;
        if fm.sigma.is_some() && fm.sigma2.is_some() {
            return Err(CliError::Invalid("config sets both model.sigma and model.sigma2".into()));
        }
        let sigma = match (overrides.sigma2, self.sigma, self.sigma2) {
            (Some(s2), _, _) => sigma_from_sigma2(s2)?,
            (None, Some(s), _) => s,
            (None, None, Some(s2)) => sigma_from_sigma2(s2)?,
            (None, None, None) => match (fm.sigma, fm.sigma2) {
                (Some(s), _) => s,
                (None, Some(s2)) => sigma_from_sigma2(s2)?,
                (None, None) => {
                    return Err(CliError::Invalid("missing --sigma or --sigma2 (or model.sigma in --config)".into()))
                }
            },
        };
        let model = ModelParams::new(beta, gamma, mu, sigma, capacity, i0)?;

        let fs = &file.scheme;
        let mut scheme = SchemeConfig::new(
            self.scheme.or(fs.scheme).unwrap_or_default(),
            self.dt.or(fs.dt).unwrap_or(DEFAULT_DT),
            self.t_end.or(fs.t_end).unwrap_or(DEFAULT_T_END),
        );
        scheme.clamp_eps = self.clamp_eps.or(fs.clamp_eps).unwrap_or(DEFAULT_CLAMP_EPS);
        scheme.extinction_eps = self.extinction_eps.or(fs.extinction_eps);
        scheme.record_stride = self.record_stride.or(fs.record_stride);
        scheme.validate(&model)?;

        let env_seed = match env_seed {
            Some(raw) => Some(
                raw.trim()
                    .parse::<u64>()
                    .map_err(|e| CliError::Invalid(format!("{SEED_ENV}='{raw}' is not a 64-bit seed: {e}")))?,
            ),
            None => None,
        };
        let fe = &file.ensemble;
        let defaults = EnsembleConfig::new(DEFAULT_PATHS, 0);
        let ensemble = EnsembleConfig {
            n_paths: self.paths.or(fe.n_paths).unwrap_or(DEFAULT_PATHS),
            base_seed: self.seed.or(env_seed).or(fe.base_seed).unwrap_or(0),
            max_workers: self.workers.or(fe.max_workers).unwrap_or(defaults.max_workers),
        };
        ensemble.validate()?;

        Ok(RunConfig {
            model,
            scheme,
            ensemble,
            output: self.format.or(file.output).unwrap_or_default(),
            out_path: self.out.clone().or(file.out_path),
            dump_paths: self.dump_paths || file.dump_paths.unwrap_or(false),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ModelOverrides {
    pub beta: Option<f64>,
    pub sigma2: Option<f64>,
}

fn sigma_from_sigma2(s2: f64) -> Result<f64, CliError> {
    if !(s2 >= 0.0) || !s2.is_finite() {
        return Err(CliError::Invalid(format!("sigma2 must be >= 0, got {s2}")));
    }
    Ok(s2.sqrt())
}

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// JSON formatter writing every float with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize as compact JSON with 17-significant-digit floats and a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, sink: &mut W) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *sink, SeventeenDigits);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    sink.write_all(b"\n")
}

fn write_summary_block<W: Write>(r: &EnsembleReport, sink: &mut W) -> io::Result<()> {
    writeln!(sink, "#summary")?;
    let g = &r.regime;
    let q = &r.slope_quantiles;
    let lines: Vec<(&str, String)> = vec![
        ("scheme", r.scheme.to_string()),
        ("n_paths", r.n_paths.to_string()),
        ("r0s", fmt_f64(g.r0s)),
        ("theorem_case", format!("{:?}", g.theorem_case)),
        ("rate_bound", fmt_f64(g.rate_bound)),
        ("average_bound", fmt_f64(g.average_bound)),
        ("low_noise_extinction", g.low_noise_extinction.to_string()),
        ("high_noise_extinction", g.high_noise_extinction.to_string()),
        ("conjecture_region", g.conjecture_region.to_string()),
        ("persistence", g.persistence.to_string()),
        ("deterministic", g.deterministic.to_string()),
        ("critical", g.critical.to_string()),
        ("extinct_fraction", fmt_f64(r.extinct_fraction)),
        ("slope_mean", fmt_f64(r.slope_mean)),
        ("slope_stderr", fmt_f64(r.slope_stderr)),
        ("slope_q05", fmt_f64(q.p05)),
        ("slope_q25", fmt_f64(q.p25)),
        ("slope_q50", fmt_f64(q.p50)),
        ("slope_q75", fmt_f64(q.p75)),
        ("slope_q95", fmt_f64(q.p95)),
        ("avg_i_mean", fmt_f64(r.avg_i_mean)),
        ("mart_mean", fmt_f64(r.mart_mean)),
        ("mart_stderr", fmt_f64(r.mart_stderr)),
        ("max_identity_residual", fmt_f64(r.max_identity_residual)),
        ("max_log_identity_residual", fmt_f64(r.max_log_identity_residual)),
        ("max_decomposition_gap", fmt_f64(r.max_decomposition_gap)),
        ("min_hoelder_margin", fmt_f64(r.min_hoelder_margin)),
        ("unreliable_paths", r.unreliable_paths.to_string()),
    ];
    for (k, v) in lines {
        writeln!(sink, "# {k}={v}")?;
    }
    Ok(())
}

fn csv_row(s: &PathSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        s.path_index,
        s.seed,
        s.extinct,
        fmt_f64(s.t_stop),
        fmt_f64(s.slope_endpoint),
        fmt_opt(s.slope_regression),
        fmt_f64(s.avg_i),
        fmt_f64(s.avg_i2),
        fmt_f64(s.psi),
        fmt_f64(s.mart_state_over_t),
        fmt_f64(s.mart_log_over_t),
        s.clamp_count
    )
}

/// Write an ensemble report: CSV (header, one row per path, `#summary`
/// comment block) or a single JSON object.
pub fn emit_report<W: Write>(report: &EnsembleReport, format: OutputFormat, sink: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Json => write_json(report, sink),
        OutputFormat::Csv => {
            writeln!(sink, "{CSV_HEADER}")?;
            for s in &report.per_path {
                writeln!(sink, "{}", csv_row(s))?;
            }
            write_summary_block(report, sink)
        }
    }
}

const SAMPLE_HEADER: &str = "t,i,log_i,sum_i,sum_i2,mart_state,mart_log,shift_state,shift_log";

fn write_sample_rows<W: Write>(prefix: Option<u64>, samples: &[Sample], sink: &mut W) -> io::Result<()> {
    for s in samples {
        if let Some(k) = prefix {
            write!(sink, "{k},")?;
        }
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.i),
            fmt_f64(s.log_i),
            fmt_f64(s.sum_i),
            fmt_f64(s.sum_i2),
            fmt_f64(s.mart_state),
            fmt_f64(s.mart_log),
            fmt_f64(s.shift_state),
            fmt_f64(s.shift_log)
        )?;
    }
    Ok(())
}

/// Sample series of every path, one row per sample.
pub fn emit_paths<W: Write>(report: &EnsembleReport, sink: &mut W) -> io::Result<()> {
    writeln!(sink, "path_index,{SAMPLE_HEADER}")?;
    for s in &report.per_path {
        if let Some(samples) = &s.samples {
            write_sample_rows(Some(s.path_index), samples, sink)?;
        }
    }
    Ok(())
}

/// Serializable view of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub params_hash: String,
    pub scheme: SchemeKind,
    pub seed: u64,
    pub path_index: u64,
    pub extinct: bool,
    pub t_stop: f64,
    pub steps: u64,
    pub clamp_count: u64,
    pub slope_endpoint: f64,
    pub slope_regression: Option<f64>,
    pub avg_i_final: f64,
    pub avg_i2_final: f64,
    pub psi_final: f64,
    pub hoelder_margin: f64,
    pub max_state_residual: f64,
    pub max_log_residual: f64,
    pub samples: Vec<Sample>,
}

impl From<&PathRecord> for PathReport {
    fn from(r: &PathRecord) -> Self {
        PathReport {
            params_hash: format!("{:016x}", r.params_hash),
            scheme: r.scheme(),
            seed: r.key.seed,
            path_index: r.key.stream,
            extinct: r.extinct,
            t_stop: r.t_stop,
            steps: r.steps,
            clamp_count: r.clamp_count,
            slope_endpoint: r.slope_endpoint,
            slope_regression: r.slope_regression,
            avg_i_final: r.avg_i_final,
            avg_i2_final: r.avg_i2_final,
            psi_final: r.psi_final,
            hoelder_margin: r.hoelder_margin,
            max_state_residual: r.max_state_residual,
            max_log_residual: r.max_log_residual,
            samples: r.samples.clone(),
        }
    }
}

pub fn emit_path<W: Write>(path: &PathReport, format: OutputFormat, sink: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Json => write_json(path, sink),
        OutputFormat::Csv => {
            writeln!(sink, "{SAMPLE_HEADER}")?;
            write_sample_rows(None, &path.samples, sink)?;
            writeln!(sink, "#summary")?;
            let lines: Vec<(&str, String)> = vec![
                ("params_hash", path.params_hash.clone()),
                ("scheme", path.scheme.to_string()),
                ("seed", path.seed.to_string()),
                ("path_index", path.path_index.to_string()),
                ("extinct", path.extinct.to_string()),
                ("t_stop", fmt_f64(path.t_stop)),
                ("steps", path.steps.to_string()),
                ("clamp_count", path.clamp_count.to_string()),
                ("slope_endpoint", fmt_f64(path.slope_endpoint)),
                ("slope_regression", fmt_opt(path.slope_regression)),
                ("avg_i_final", fmt_f64(path.avg_i_final)),
                ("avg_i2_final", fmt_f64(path.avg_i2_final)),
                ("psi_final", fmt_f64(path.psi_final)),
                ("hoelder_margin", fmt_f64(path.hoelder_margin)),
                ("max_state_residual", fmt_f64(path.max_state_residual)),
                ("max_log_residual", fmt_f64(path.max_log_residual)),
            ];
            for (k, v) in lines {
                writeln!(sink, "# {k}={v}")?;
            }
            Ok(())
        }
    }
}

pub fn emit_regime<W: Write>(r: &RegimeReport, format: OutputFormat, sink: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Json => write_json(r, sink),
        OutputFormat::Csv => {
            writeln!(sink, "r0s={}", r.r0s)?;
            writeln!(sink, "case={:?}", r.theorem_case)?;
            writeln!(sink, "rate_bound={}", r.rate_bound)?;
            writeln!(sink, "average_bound={}", r.average_bound)?;
            writeln!(sink, "low_noise_extinction={}", r.low_noise_extinction)?;
            writeln!(sink, "high_noise_extinction={}", r.high_noise_extinction)?;
            writeln!(sink, "conjecture_region={}", r.conjecture_region)?;
            writeln!(sink, "persistence={}", r.persistence)?;
            writeln!(sink, "deterministic={}", r.deterministic)?;
            writeln!(sink, "critical={}", r.critical)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
    pub report: EnsembleReport,
}

pub fn emit_verdicts<W: Write>(v: &VerifyOutput, format: OutputFormat, sink: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Json => write_json(v, sink),
        OutputFormat::Csv => {
            writeln!(sink, "check_name,predicted,measured,tolerance,pass,detail")?;
            for x in &v.verdicts {
                writeln!(
                    sink,
                    "{},{},{},{},{},\"{}\"",
                    x.check_name,
                    fmt_f64(x.predicted),
                    fmt_f64(x.measured),
                    fmt_f64(x.tolerance),
                    x.pass,
                    x.detail.replace('"', "\"\"")
                )?;
            }
            write_summary_block(&v.report, sink)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub sigma2: f64,
    pub regime: RegimeReport,
    pub extinct_fraction: Option<f64>,
    pub slope_mean: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub avg_i_mean: Option<f64>,
    pub unreliable_paths: Option<u64>,
}

pub fn emit_sweep<W: Write>(rows: &[SweepRow], format: OutputFormat, sink: &mut W) -> io::Result<()> {
    match format {
        OutputFormat::Json => write_json(&rows, sink),
        OutputFormat::Csv => {
            writeln!(
                sink,
                "beta,sigma2,r0s,theorem_case,rate_bound,average_bound,low_noise_extinction,high_noise_extinction,conjecture_region,persistence,critical,extinct_fraction,slope_mean,slope_stderr,avg_i_mean,unreliable_paths"
            )?;
            for r in rows {
                let g = &r.regime;
                writeln!(
                    sink,
                    "{},{},{},{:?},{},{},{},{},{},{},{},{},{},{},{},{}",
                    fmt_f64(r.beta),
                    fmt_f64(r.sigma2),
                    fmt_f64(g.r0s),
                    g.theorem_case,
                    fmt_f64(g.rate_bound),
                    fmt_f64(g.average_bound),
                    g.low_noise_extinction,
                    g.high_noise_extinction,
                    g.conjecture_region,
                    g.persistence,
                    g.critical,
                    fmt_opt(r.extinct_fraction),
                    fmt_opt(r.slope_mean),
                    fmt_opt(r.slope_stderr),
                    fmt_opt(r.avg_i_mean),
                    r.unreliable_paths.map(|u| u.to_string()).unwrap_or_default()
                )?;
            }
            Ok(())
        }
    }
}

fn open_sink<'a>(out: &Option<PathBuf>, stdout: &'a mut dyn Write) -> io::Result<Box<dyn Write + 'a>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(stdout),
    })
}

fn paths_file_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sis".into());
    out.with_file_name(format!("{stem}.paths.csv"))
}

fn write_ensemble_output(cfg: &RunConfig, report: &EnsembleReport, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut sink = open_sink(&cfg.out_path, stdout)?;
    emit_report(report, cfg.output, &mut sink)?;
    if cfg.dump_paths && cfg.output == OutputFormat::Csv {
        match &cfg.out_path {
            Some(out) => {
                let mut f = BufWriter::new(File::create(paths_file_for(out))?);
                emit_paths(report, &mut f)?;
                f.flush()?;
            }
            None => {
                writeln!(sink, "#paths")?;
                emit_paths(report, &mut sink)?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

/// Execute a parsed command.
pub fn execute(cli: &Cli, env_seed: Option<&str>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Classify(args) => {
            let cfg = args.resolve(env_seed, ModelOverrides::default())?;
            let regime = cfg.model.classify()?;
            let mut sink = open_sink(&cfg.out_path, stdout)?;
            emit_regime(&regime, cfg.output, &mut sink)?;
            sink.flush()?;
        }
        Command::Simulate(sim) => {
            let cfg = sim.common.resolve(env_seed, ModelOverrides::default())?;
            let record = integrate(&cfg.model, &cfg.scheme, StreamKey::new(cfg.ensemble.base_seed, sim.path_index))?;
            if record.unreliable() {
                return Err(Error::Unreliable { clamps: record.clamp_count, steps: record.steps }.into());
            }
            let mut sink = open_sink(&cfg.out_path, stdout)?;
            emit_path(&PathReport::from(&record), cfg.output, &mut sink)?;
            sink.flush()?;
        }
        Command::Ensemble(args) => {
            let cfg = args.resolve(env_seed, ModelOverrides::default())?;
            let report = run_ensemble_with(&cfg.model, &cfg.scheme, &cfg.ensemble, cfg.dump_paths)?;
            write_ensemble_output(&cfg, &report, stdout)?;
        }
        Command::Verify(args) => {
            let cfg = args.resolve(env_seed, ModelOverrides::default())?;
            let report = run_ensemble_with(&cfg.model, &cfg.scheme, &cfg.ensemble, cfg.dump_paths)?;
            let verdicts = verify::run_all(&cfg.model, &report)?;
            let out = VerifyOutput { all_pass: verdicts.iter().all(|v| v.pass), verdicts, report };
            let mut sink = open_sink(&cfg.out_path, stdout)?;
            emit_verdicts(&out, cfg.output, &mut sink)?;
            sink.flush()?;
            if !out.all_pass {
                return Err(CliError::VerifyFailed);
            }
        }
        Command::Sweep(sw) => {
            let rows = run_sweep(sw, env_seed)?;
            let cfg = sw.common.resolve(
                env_seed,
                ModelOverrides { beta: sw.beta_grid.map(|g| g.start), sigma2: sw.sigma2_grid.map(|g| g.start) },
            )?;
            let mut sink = open_sink(&cfg.out_path, stdout)?;
            emit_sweep(&rows, cfg.output, &mut sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

/// One row per grid point, β outer and σ² inner.
pub fn run_sweep(sw: &SweepArgs, env_seed: Option<&str>) -> Result<Vec<SweepRow>, CliError> {
    if sw.beta_grid.is_none() && sw.sigma2_grid.is_none() {
        return Err(CliError::Invalid("sweep needs --sigma2-grid and/or --beta-grid".into()));
    }
    let betas: Vec<Option<f64>> = match sw.beta_grid {
        Some(g) => g.points().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let sigma2s: Vec<Option<f64>> = match sw.sigma2_grid {
        Some(g) => g.points().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut rows = Vec::with_capacity(betas.len() * sigma2s.len());
    for &beta in &betas {
        for &sigma2 in &sigma2s {
            let cfg = sw.common.resolve(env_seed, ModelOverrides { beta, sigma2 })?;
            let regime = cfg.model.classify()?;
            let mut row = SweepRow {
                beta: cfg.model.beta,
                sigma2: sigma2.unwrap_or_else(|| cfg.model.sigma2()),
                regime,
                extinct_fraction: None,
                slope_mean: None,
                slope_stderr: None,
                avg_i_mean: None,
                unreliable_paths: None,
            };
            if !sw.classify_only {
                let r = run_ensemble_with(&cfg.model, &cfg.scheme, &cfg.ensemble, false)?;
                row.extinct_fraction = Some(r.extinct_fraction);
                row.slope_mean = Some(r.slope_mean);
                row.slope_stderr = Some(r.slope_stderr);
                row.avg_i_mean = Some(r.avg_i_mean);
                row.unreliable_paths = Some(r.unreliable_paths);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Parse, execute and map the outcome to an exit code. Diagnostics go to `stderr`.
pub fn main_with_args<I, T>(argv: I, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(Ok(cli)) => cli,
        Ok(Err(text)) => {
            let _ = write!(stdout, "{text}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return e.exit_code();
        }
    };
    match execute(&cli, env_seed, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "sis: {e}");
            e.exit_code()
        }
    }
}
