//! Simulation and verification harness for the stochastic SIS epidemic SDE
//!
//! ```text
//! dI = [(βN − μ − γ) I − β I²] dt + σ (N − I) I dB,   I(0) ∈ (0, N)
//! ```
//!
//! * [`model`]: parameters, coefficients, and the regime classifier.
//! * [`sde`]: Euler–Maruyama (state and log) and Milstein stepping.
//! * [`pathstats`]: time averages, integral-identity residuals, log-slopes.
//! * [`ensemble`]: reproducible parallel Monte Carlo.
//! * [`verify`]: pass/fail checks of the rate and time-average bounds.
//! * [`cli`]: the `sis` command-line tool.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod pathstats;
pub mod sde;
pub mod verify;

pub use ensemble::{run_ensemble, EnsembleConfig, EnsembleReport, PathSummary};
pub use error::{Error, Result};
pub use model::{ModelParams, RegimeReport, TheoremCase};
pub use pathstats::{PathRecord, Sample};
pub use sde::{simulate_path, SchemeConfig, SchemeKind, StreamKey};
pub use verify::Verdict;
