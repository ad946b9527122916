//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use sis_core::cli::write_json;
use sis_core::ensemble::run_ensemble;
use sis_core::model::TheoremCase;
use sis_core::sde::integrate;
use sis_core::verify::{self, logistic_reference};
use sis_core::{EnsembleConfig, EnsembleReport, ModelParams, SchemeConfig, SchemeKind, StreamKey};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn ensemble(p: &ModelParams, cfg: &SchemeConfig, paths: u64, seed: u64, workers: usize) -> EnsembleReport {
    run_ensemble(p, cfg, &EnsembleConfig::new(paths, seed).with_workers(workers)).expect("ensemble run")
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn json_bytes(r: &EnsembleReport) -> Vec<u8> {
    let mut buf = Vec::new();
    write_json(r, &mut buf).expect("serialize");
    buf
}

// Mean endpoint slope in [-0.65, -0.35] and within three standard errors of -0.5.
fn rate_case_one(r: &EnsembleReport) -> Outcome {
    let predicted = r.regime.rate_bound;
    let (mean, se) = (r.slope_mean, r.slope_stderr);
    let in_band = (-0.65..=-0.35).contains(&mean);
    let tight = (mean - predicted).abs() <= 3.0 * se;
    Outcome {
        name: "1 case-one rate",
        pass: r.regime.theorem_case == TheoremCase::CaseI && in_band && tight,
        detail: format!(
            "predicted {predicted:.6} mean {mean:.6} stderr {se:.6} band[-0.65,-0.35]={in_band} |mean-pred|={:.6} <= 3se={:.6}: {tight}",
            (mean - predicted).abs(),
            3.0 * se
        ),
    }
}

fn bound_case_two(r: &EnsembleReport) -> Outcome {
    let q95 = r.slope_quantiles.p95;
    Outcome {
        name: "2 case-two bound",
        pass: r.regime.theorem_case == TheoremCase::CaseII && q95 <= -14.4 && r.extinct_fraction == 1.0,
        detail: format!(
            "predicted {:.6} q95 {q95:.6} <= -14.4, extinct_fraction {}",
            r.regime.rate_bound, r.extinct_fraction
        ),
    }
}

fn average_bound(name: &'static str, p: &ModelParams, r: &EnsembleReport, limit: f64) -> Outcome {
    let v = verify::check_lemma(p, r, verify::DEFAULT_TOL_LEMMA).expect("lemma check");
    Outcome { name, pass: v.pass && v.measured <= limit, detail: format!("q95 <I(T)> {:.6} <= {limit}", v.measured) }
}

fn deterministic_oracle() -> Outcome {
    let p = ModelParams::new(1.0, 20.0, 20.0, 0.0, 100.0, 10.0).unwrap();
    let run = |dt: f64| {
        integrate(&p, &SchemeConfig::new(SchemeKind::EulerMaruyamaState, dt, 1.0), StreamKey::new(0, 0)).unwrap()
    };
    let sup_err = |dt: f64| {
        let path = run(dt);
        let err = path.samples.iter().map(|s| (s.i - logistic_reference(&p, s.t).unwrap()).abs()).fold(0.0, f64::max);
        (path, err)
    };
    let (fine, e1) = sup_err(1e-4);
    let (_, e2) = sup_err(5e-5);
    let exact = logistic_reference(&p, 1.0).unwrap();
    let rel = (fine.final_i() - exact).abs() / exact;
    let ratio = e2 / e1;
    Outcome {
        name: "7 deterministic oracle",
        pass: rel <= 1e-3 && (0.4..=0.6).contains(&ratio),
        detail: format!("final rel err {rel:.3e} <= 1e-3, sup err {e1:.3e} -> {e2:.3e} ratio {ratio:.4} in [0.4,0.6]"),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let w = workers();
    let mut out = Vec::new();

    let p1 = ModelParams::with_sigma2(1.0, 20.0, 20.0, 0.0121, 100.0, 50.0).unwrap();
    // The slope is read at the horizon, so paths are never stopped early.
    let c1 = SchemeConfig::new(SchemeKind::EulerMaruyamaLog, 1e-3, 1000.0).with_extinction_eps(0.0);
    let r1 = ensemble(&p1, &c1, 400, 1, w);
    out.push(rate_case_one(&r1));

    let p2 = ModelParams::with_sigma2(1.0, 20.0, 20.0, 0.02, 100.0, 10.0).unwrap();
    let c2 = SchemeConfig::new(SchemeKind::EulerMaruyamaLog, 1e-3, 100.0);
    let r2 = ensemble(&p2, &c2, 200, 2, w);
    out.push(bound_case_two(&r2));

    let p3 = ModelParams::new(1.0, 20.0, 20.0, 0.03, 100.0, 10.0).unwrap();
    let c3 = SchemeConfig::new(SchemeKind::EulerMaruyamaState, 1e-3, 500.0);
    let r3 = ensemble(&p3, &c3, 200, 3, w);
    out.push(average_bound("3 persistence average bound", &p3, &r3, 63.0));

    let p4 = ModelParams::new(0.3, 20.0, 20.0, 0.05, 100.0, 50.0).unwrap();
    let c4 = SchemeConfig::new(SchemeKind::EulerMaruyamaState, 1e-3, 500.0);
    let r4 = ensemble(&p4, &c4, 100, 4, w);
    out.push(average_bound("4 vanishing average", &p4, &r4, 5.0));

    let state_runs = [&r3, &r4];
    let worst = state_runs.iter().map(|r| r.max_identity_residual).fold(0.0, f64::max);
    out.push(Outcome {
        name: "5 discrete state identity",
        pass: state_runs.iter().all(|r| r.scheme == SchemeKind::EulerMaruyamaState) && worst <= 1e-8,
        detail: format!("max relative residual {worst:.3e} <= 1e-8 over {} em-state ensembles", state_runs.len()),
    });

    let log_runs = [&r1, &r2];
    let gap = log_runs.iter().map(|r| r.max_decomposition_gap).fold(0.0, f64::max);
    let marts_ok = log_runs.iter().all(|r| r.mart_mean.abs() <= 3.0 * r.mart_stderr);
    let mart_detail: Vec<String> =
        log_runs.iter().map(|r| format!("{:.3e}/{:.3e}", r.mart_mean.abs(), 3.0 * r.mart_stderr)).collect();
    out.push(Outcome {
        name: "6 slope decomposition",
        pass: gap <= 1e-6 && marts_ok,
        detail: format!("max gap {gap:.3e} <= 1e-6, |mart_mean|/3se {}", mart_detail.join(" ")),
    });

    out.push(deterministic_oracle());

    let all: [(&ModelParams, &EnsembleReport); 4] = [(&p1, &r1), (&p2, &r2), (&p3, &r3), (&p4, &r4)];
    let worst_margin =
        all.iter().map(|(p, r)| r.min_hoelder_margin / (p.capacity * p.capacity)).fold(f64::INFINITY, f64::min);
    out.push(Outcome {
        name: "8 hoelder invariant",
        pass: worst_margin >= -1e-9,
        detail: format!("min (<I^2> - <I>^2)/N^2 {worst_margin:.3e} >= -1e-9"),
    });

    let a = json_bytes(&ensemble(&p2, &c2, 200, 2, 1));
    let b = json_bytes(&ensemble(&p2, &c2, 200, 2, 8));
    let c = json_bytes(&r2);
    out.push(Outcome {
        name: "9 reproducibility",
        pass: a == b && a == c,
        detail: format!("json reports with 1, 8 and {w} workers identical ({} bytes)", a.len()),
    });

    let mut failed = 0;
    for o in &out {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed in {:.1}s", out.len() - failed, out.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
