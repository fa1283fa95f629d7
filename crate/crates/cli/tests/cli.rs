use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};
use gasnhmm::calendar::{build_covariates, smooth_cwv_baseline};
use gasnhmm::config::RunConfig;
use gasnhmm::generative::simulate;
use gasnhmm::inference::{log_likelihood_f64, FitData};
use gasnhmm::io::{read_demand, DemandSeries};
use gasnhmm::state_model::ModelMode;
use gasnhmm::synthetic::{recovery_truth, sinusoidal_cwv, uk_bank_holidays};

const SMALL: &str = "k_gamma = 2\nk_kappa = 2\nchains = 2\niterations = 120\nthin = 2\nleapfrog_steps = 5\n";

fn gasnhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasnhmm")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulated(dir: &Path, days: u64, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = dir.join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let sim = dir.join("sim");
    let out = gasnhmm(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        &seed.to_string(),
        "--days",
        &days.to_string(),
        "--out-dir",
        s(&sim),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (cfg, sim.join("data.csv"), sim.join("holidays.csv"))
}

#[test]
fn ingested_series_gives_the_in_memory_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    let seed = 3u64;
    let (_, data, _) = simulated(dir.path(), 420, seed);

    let start = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
    let dates: Vec<_> = (0..420).map(|i| start + Days::new(i)).collect();
    let cfg = RunConfig::default();
    let cal = uk_bank_holidays(2014, 2017).unwrap();
    let cwv = sinusoidal_cwv(&dates, 2 * seed + 1);
    let baseline = smooth_cwv_baseline(&dates, &cwv, cfg.cwv_halfwidth).unwrap();
    let cov = build_covariates(&dates, &cal, &cwv, &baseline).unwrap();
    let truth = recovery_truth(2, 2);
    let sim = simulate(&truth, &cov, ModelMode::FourState, 2 * seed).unwrap();
    let memory = DemandSeries::from_log(dates, &sim.y, cwv);

    let read = read_demand(&data).unwrap();
    assert_eq!(read, memory);
    let ll = |series: &DemandSeries| {
        let d = FitData::with_harmonics(series.log_demand(), cov.clone(), ModelMode::FourState, 2).unwrap();
        log_likelihood_f64(&d, &truth).unwrap()
    };
    assert_eq!(ll(&read).to_bits(), ll(&memory).to_bits());
}

#[test]
fn every_command_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data, hol) = simulated(dir.path(), 400, 5);
    let out = dir.path().join("run");
    let common = |cmd: &'static str| -> Vec<String> {
        [cmd, "--config", s(&cfg), "--data", s(&data), "--holidays", s(&hol), "--out-dir", s(&out), "--seed", "9"]
            .map(String::from)
            .to_vec()
    };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = gasnhmm(&refs);
        assert!(o.status.success(), "{refs:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(common("fit"));
    for f in ["draws.csv", "diagnostics.json", "manifest_fit.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["mode"], "four_state");

    run(common("smooth"));
    let smoothed = std::fs::read_to_string(out.join("smoothed.csv")).unwrap();
    assert!(smoothed.starts_with("date,p_state1,p_state2,p_state3,p_state4"));
    assert_eq!(smoothed.lines().count(), 401);

    run(common("ppc"));
    run(common("report"));
    for f in ["ppc.json", "ppc_days.csv", "report_states.csv", "report_parameters.csv", "report_densities.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let future = dir.path().join("future.csv");
    let last = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap() + Days::new(399);
    let rows: String = (1..=10).map(|i| format!("{},8.5,9.5\n", last + Days::new(i))).collect();
    std::fs::write(&future, format!("date,w1,w2\n{rows}")).unwrap();
    let mut f = common("forecast");
    f.extend(["--horizon".into(), "10".into(), "--future-cwv".into(), s(&future).into()]);
    run(f);
    let fc = std::fs::read_to_string(out.join("forecast.csv")).unwrap();
    assert_eq!(fc.lines().count(), 1 + 2 * 10);
    for m in ["smooth", "ppc", "report", "forecast"] {
        assert!(out.join(format!("manifest_{m}.json")).is_file(), "{m}");
    }
}

#[test]
fn bad_input_exits_with_code_two_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,y1,y2,w1,w2\n2020-01-01,1,2,3,4\n2020-01-02,oops,2,3,4\n").unwrap();
    let hol = dir.path().join("hol.csv");
    std::fs::write(&hol, "date,type\n2019-12-25,1\n2020-12-25,1\n").unwrap();
    let o = gasnhmm(&["fit", "--data", s(&bad), "--holidays", s(&hol), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["line"], 3);

    let o = gasnhmm(&["smooth", "--data", "missing.csv", "--holidays", s(&hol), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn draws_refuse_a_different_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data, hol) = simulated(dir.path(), 400, 6);
    let out = dir.path().join("run");
    let base = ["--config", s(&cfg), "--data", s(&data), "--holidays", s(&hol), "--out-dir", s(&out)];
    let mut fit = vec!["fit"];
    fit.extend(base);
    assert!(gasnhmm(&fit).status.success());
    let mut smooth = vec!["smooth", "--mode", "two_state"];
    smooth.extend(base);
    let o = gasnhmm(&smooth);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
