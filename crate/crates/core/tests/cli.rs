use std::process::{Command, Output};

use sis_core::ensemble::run_ensemble;
use sis_core::{EnsembleConfig, EnsembleReport, ModelParams, SchemeConfig, SchemeKind};

const P3: [&str; 12] =
    ["--beta", "1", "--gamma", "20", "--mu", "20", "--capacity", "100", "--sigma", "0.03", "--i0", "10"];

fn sis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis")).args(args).env_remove("SIS_SEED").output().unwrap()
}

fn sis_env(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis")).args(args).env("SIS_SEED", seed).output().unwrap()
}

fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = P3.to_vec();
    v.extend_from_slice(extra);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn classify_reports_case_and_bound() {
    let o = sis(&[
        "classify",
        "--beta",
        "1",
        "--gamma",
        "20",
        "--mu",
        "20",
        "--capacity",
        "100",
        "--sigma2",
        "0.0121",
        "--i0",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("case=CaseI\n"), "{text}");
    assert!(text.contains("conjecture_region=true\n"));
    let r0s: f64 = text.lines().find_map(|l| l.strip_prefix("r0s=")).unwrap().parse().unwrap();
    assert!((r0s - 0.9875).abs() < 1e-12);
}

#[test]
fn missing_parameter_exits_one_and_names_flag() {
    let o = sis(&["classify", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--gamma"));
}

#[test]
fn invariant_violation_exits_one() {
    let mut args = vec!["classify"];
    args.extend(P3.iter().copied().map(|a| if a == "10" { "150" } else { a }));
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_verification_exits_two() {
    // Started near N over a short horizon, the time average cannot be below 63.
    let mut args = vec!["verify"];
    args.extend(P3.iter().copied().map(|a| if a == "10" { "99" } else { a }));
    args.extend(["--t-end", "0.1", "--paths", "4", "--scheme", "em-state"]);
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("lemma_average_bound"));
}

#[test]
fn passing_verification_exits_zero() {
    let mut args = vec!["verify"];
    args.extend(with(&["--t-end", "20", "--paths", "8", "--scheme", "em-state"]));
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn unwritable_output_exits_three() {
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "1", "--paths", "1", "--out", "/nonexistent-dir/x/out.csv"]));
    assert_eq!(sis(&args).status.code(), Some(3));
}

#[test]
fn single_path_csv_has_one_data_row() {
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "1", "--paths", "1"]));
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("path_index,seed,extinct,t_stop"));
    assert_eq!(rows[1].split(',').count(), rows[0].split(',').count());
    assert!(text.contains("#summary"));
}

#[test]
fn json_report_round_trips_bitwise() {
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "2", "--paths", "6", "--seed", "11", "--format", "json"]));
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(0));
    let parsed: EnsembleReport = serde_json::from_slice(&o.stdout).unwrap();

    let p = ModelParams::new(1.0, 20.0, 20.0, 0.03, 100.0, 10.0).unwrap();
    let cfg = SchemeConfig::new(SchemeKind::EulerMaruyamaLog, 1e-3, 2.0);
    let direct = run_ensemble(&p, &cfg, &EnsembleConfig::new(6, 11)).unwrap();
    assert_eq!(parsed, direct);
    assert_eq!(parsed.slope_mean.to_bits(), direct.slope_mean.to_bits());
    for (a, b) in parsed.per_path.iter().zip(&direct.per_path) {
        assert_eq!(a.avg_i2.to_bits(), b.avg_i2.to_bits());
        assert_eq!(a.psi.to_bits(), b.psi.to_bits());
    }
}

#[test]
fn seed_flag_and_environment_agree() {
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "1", "--paths", "3"]));
    let from_env = sis_env(&args, "42");
    args.extend(["--seed", "42"]);
    let from_flag = sis(&args);
    assert_eq!(from_env.stdout, from_flag.stdout);
    // The flag wins over the environment.
    assert_eq!(sis_env(&args, "7").stdout, from_flag.stdout);
    let unseeded = sis(&args[..args.len() - 2]);
    assert_ne!(unseeded.stdout, from_flag.stdout);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"model":{"beta":1,"gamma":20,"mu":20,"sigma2":0.0009,"capacity":100,"i0":10},
            "scheme":{"scheme":"em-state","t_end":1},
            "ensemble":{"n_paths":3,"base_seed":5}}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = sis(&["ensemble", "--config", cfg]);
    assert_eq!(from_file.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_file.stderr));
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "1", "--paths", "3", "--seed", "5", "--scheme", "em-state"]));
    assert_eq!(from_file.stdout, sis(&args).stdout);

    let overridden = sis(&["ensemble", "--config", cfg, "--paths", "2"]);
    let rows = stdout(&overridden).lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 3);

    std::fs::write(dir.path().join("bad.json"), r#"{"model":{"bogus":1}}"#).unwrap();
    let bad = sis(&["ensemble", "--config", dir.path().join("bad.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn output_file_and_path_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut args = vec!["ensemble"];
    let o = out.to_str().unwrap().to_owned();
    args.extend(with(&["--t-end", "1", "--paths", "2", "--dump-paths", "--out", &o]));
    assert_eq!(sis(&args).status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("path_index,"));
    let dump = std::fs::read_to_string(dir.path().join("run.paths.csv")).unwrap();
    assert!(dump.lines().count() > 2);
}

#[test]
fn simulate_path_index_matches_ensemble_row() {
    let mut args = vec!["simulate"];
    args.extend(with(&["--t-end", "1", "--seed", "9", "--path-index", "2", "--format", "json"]));
    let o = sis(&args);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut args = vec!["ensemble"];
    args.extend(with(&["--t-end", "1", "--seed", "9", "--paths", "3", "--format", "json"]));
    let e: EnsembleReport = serde_json::from_slice(&sis(&args).stdout).unwrap();
    assert_eq!(v["slope_endpoint"].as_f64().unwrap(), e.per_path[2].slope_endpoint);
}

#[test]
fn sweep_classify_only() {
    let o = sis(&[
        "sweep",
        "--beta",
        "1",
        "--gamma",
        "20",
        "--mu",
        "20",
        "--capacity",
        "100",
        "--i0",
        "10",
        "--sigma2-grid",
        "0:0.02:5",
        "--classify-only",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 6);
}
