use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ggtde_core::ggd::{self, GgdParams};
use serde_json::Value;
use tempfile::TempDir;

fn ggtde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggtde"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/chain_laplace.json")
}

fn write_column(dir: &Path, name: &str, xs: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut s = String::from("delta\n");
    for x in xs {
        s.push_str(&format!("{x}\n"));
    }
    fs::write(&path, s).unwrap();
    path
}

fn fit_report(input: &Path, mode: &str, out: &Path) -> Value {
    let o = ggtde(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        mode,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn fit_recovers_shape_and_writes_histogram() {
    let tmp = TempDir::new().unwrap();
    let xs = ggd::sample(&GgdParams::zero_mean(1.0, 1.2).unwrap(), 100_000, 8).unwrap();
    let input = write_column(tmp.path(), "errors.csv", &xs);
    let out = tmp.path().join("fit.json");
    let report = fit_report(&input, "beta-only", &out);
    let beta = report["fit"]["params"]["beta"].as_f64().unwrap();
    assert!((beta / 1.2 - 1.0).abs() < 0.05, "beta {beta}");
    assert_eq!(report["n"], 100_000);

    let hist = fs::read_to_string(tmp.path().join("fit.hist.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(
        lines.next().unwrap(),
        "bin_left,bin_right,empirical_density,ggd_density,gaussian_density"
    );
    assert_eq!(lines.count(), 40);

    let again = ggtde(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&again), 2, "existing report is not overwritten");
}

#[test]
fn fit_sees_gaussian_draws_as_shape_two() {
    let tmp = TempDir::new().unwrap();
    // N(0, 1) drawn as GGD(0, √2, 2).
    let xs = ggd::sample(&GgdParams::zero_mean(2f64.sqrt(), 2.0).unwrap(), 100_000, 9).unwrap();
    let input = write_column(tmp.path(), "normal.csv", &xs);
    let report = fit_report(&input, "alpha_beta", &tmp.path().join("fit.json"));
    let beta = report["fit"]["params"]["beta"].as_f64().unwrap();
    assert!((beta - 2.0).abs() < 0.1, "beta {beta}");
    let sd = report["gaussian"]["std_dev"].as_f64().unwrap();
    assert!((sd - 1.0).abs() < 0.02);
}

#[test]
fn fit_rejects_degenerate_and_short_input() {
    let tmp = TempDir::new().unwrap();
    let zeros = write_column(tmp.path(), "zeros.csv", &[0.0; 50]);
    let o = ggtde(&["fit", "--input", zeros.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!stderr(&o).is_empty());

    let short = write_column(tmp.path(), "short.csv", &[0.1, -0.2, 0.3]);
    assert_eq!(
        code(&ggtde(&["fit", "--input", short.to_str().unwrap()])),
        2
    );
    assert_eq!(
        code(&ggtde(&["fit", "--input", "/nonexistent/errors.csv"])),
        2
    );
}

fn dominance_values(o: &Output) -> Vec<f64> {
    let text = stdout(o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,integral");
    lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn dominance_holds_for_ordered_shapes() {
    let o = ggtde(&[
        "dominance",
        "--beta1",
        "1",
        "--beta2",
        "2",
        "--alpha",
        "1",
        "--grid",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = dominance_values(&o);
    assert_eq!(v.len(), 50);
    assert!(v.iter().all(|&x| x >= -1e-7));

    let o = ggtde(&[
        "dominance",
        "--beta1",
        "2",
        "--beta2",
        "2",
        "--alpha",
        "1",
        "--grid",
        "50",
    ]);
    assert_eq!(code(&o), 0);
    assert!(dominance_values(&o).iter().all(|x| x.abs() < 1e-9));
}

#[test]
fn dominance_reversal_is_reported() {
    let o = ggtde(&[
        "dominance",
        "--beta1",
        "2",
        "--beta2",
        "1",
        "--alpha",
        "1",
        "--grid",
        "50",
    ]);
    assert_eq!(code(&o), 1);
    assert!(dominance_values(&o).iter().any(|&x| x < 0.0));
    assert!(stderr(&o).contains("dominance violated"));
}

fn estimators(dist: &str, trials: &str) -> (Output, Option<Value>) {
    let o = ggtde(&[
        "estimators",
        "--dist",
        dist,
        "--n",
        "10",
        "--trials",
        trials,
        "--seed",
        "7",
    ]);
    let v = serde_json::from_str(&stdout(&o)).ok();
    (o, v)
}

#[test]
fn estimator_efficiency_matches_formula() {
    for (dist, want) in [("ggd:0,1,1", 1.522), ("ggd:0,1,2", 1.222)] {
        let (o, report) = estimators(dist, "100000");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let report = report.unwrap();
        let re = report["mbbe"]["empirical_re"].as_f64().unwrap();
        assert!((re / want - 1.0).abs() < 0.1, "{dist}: {re} vs {want}");
        assert!(report["bias"]["sign_matches_kappa"].as_bool().unwrap());
    }
}

#[test]
fn estimators_need_enough_trials() {
    let (o, _) = estimators("ggd:0,1,1", "10");
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("insufficient trials"));
    let (o, _) = estimators("cauchy:0,1", "100000");
    assert_eq!(code(&o), 2);
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let config = bundled_config();
    let mut args = vec![
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ggtde(&args)
}

const SHORT: [&str; 4] = ["--set", "run.n_steps=4000", "--set", "run.checkpoints=4"];

#[test]
fn train_is_deterministic_and_reports_finals() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = [&SHORT[..], &["--seed", "1"]].concat();
    let oa = train(&a, &args);
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    assert_eq!(code(&train(&b, &args)), 0);
    let ts = |d: &Path| fs::read(d.join("timeseries.csv")).unwrap();
    assert_eq!(ts(&a), ts(&b));
    let out = stdout(&oa);
    for key in ["final return:", "final value RMSE:", "final fitted beta:"] {
        assert!(out.contains(key), "{out}");
    }
    assert_eq!(
        code(&train(&a, &args)),
        2,
        "refuses a populated run directory"
    );
    assert_eq!(code(&train(&a, &[&args[..], &["--force"]].concat())), 0);

    let other = tmp.path().join("c");
    assert_eq!(
        code(&train(&other, &[&SHORT[..], &["--seed", "2"]].concat())),
        0
    );
    assert_ne!(ts(&a), ts(&other));
}

fn loss_column(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("timeseries.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == "loss").unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().to_string())
        .collect()
}

#[test]
fn zero_lambda_override_matches_nll_only() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("biev"), tmp.path().join("only"));
    assert_eq!(
        code(&train(
            &a,
            &[&SHORT[..], &["--set", "weighting.lambda=0"]].concat()
        )),
        0
    );
    assert_eq!(
        code(&train(
            &b,
            &[&SHORT[..], &["--set", "loss.kind=ggd_nll_only"]].concat()
        )),
        0
    );
    assert_eq!(loss_column(&a), loss_column(&b));
}

#[test]
fn train_rejects_bad_configs() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"env\": 3}").unwrap();
    let o = ggtde(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        code(&train(
            &tmp.path().join("r"),
            &["--set", "env.discount=1.5"]
        )),
        2
    );
    assert_eq!(
        code(&train(
            &tmp.path().join("r"),
            &["--set", "loss.kind=nonsense"]
        )),
        2
    );
}

#[test]
fn train_divergence_exits_four() {
    let tmp = TempDir::new().unwrap();
    let o = train(
        &tmp.path().join("r"),
        &[
            &SHORT[..],
            &[
                "--set",
                "loss.kind=mse",
                "--set",
                "agent.optimizer=sgd",
                "--set",
                "agent.lr=10",
                "--set",
                "agent.lr_decay_steps=null",
            ],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn risk_modes_compare_through_analyze() {
    let tmp = TempDir::new().unwrap();
    let (averse, seeking) = (tmp.path().join("averse"), tmp.path().join("seeking"));
    assert_eq!(code(&train(&averse, &SHORT)), 0);
    let o = train(
        &seeking,
        &[&SHORT[..], &["--set", "weighting.ra_mode=risk_seeking"]].concat(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report = tmp.path().join("report");
    let o = ggtde(&[
        "analyze",
        averse.to_str().unwrap(),
        seeking.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&report.join("cov_table.csv"));
    let mode = header.iter().position(|h| h == "ra_mode").unwrap();
    let modes: Vec<&str> = rows.iter().map(|r| r[mode].as_str()).collect();
    assert_eq!(modes, ["risk_averse", "risk_seeking"]);
    assert_eq!(column(&report.join("summary.csv"), "n_runs"), vec![2.0; 4]);
    let svg = fs::read_to_string(report.join("value_rmse.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn analyze_single_run_is_its_own_median() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&train(&run, &SHORT)), 0);
    let report = tmp.path().join("report");
    let o = ggtde(&[
        "analyze",
        run.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--no-svg",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = report.join("summary.csv");
    let ts = run.join("timeseries.csv");
    assert_eq!(
        column(&summary, "value_rmse_median"),
        column(&ts, "value_rmse")
    );
    assert_eq!(column(&summary, "return_median"), column(&ts, "return"));
    assert!(column(&summary, "value_rmse_sd").iter().all(|&s| s == 0.0));
    assert!(!report.join("value_rmse.svg").exists());
}

#[test]
fn analyze_median_lies_in_envelope() {
    let tmp = TempDir::new().unwrap();
    let runs: Vec<PathBuf> = (0..5).map(|s| tmp.path().join(format!("s{s}"))).collect();
    for (s, dir) in runs.iter().enumerate() {
        let seed = s.to_string();
        assert_eq!(
            code(&train(dir, &[&SHORT[..], &["--seed", &seed]].concat())),
            0
        );
    }
    let report = tmp.path().join("report");
    let mut args = vec!["analyze"];
    args.extend(runs.iter().map(|r| r.to_str().unwrap()));
    args.extend(["--out", report.to_str().unwrap()]);
    assert_eq!(code(&ggtde(&args)), 0);
    let med = column(&report.join("summary.csv"), "value_rmse_median");
    let series: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| column(&r.join("timeseries.csv"), "value_rmse"))
        .collect();
    for (i, m) in med.iter().enumerate() {
        let lo = series.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
        let hi = series
            .iter()
            .map(|s| s[i])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= *m && *m <= hi, "row {i}: {lo} <= {m} <= {hi}");
    }
}

#[test]
fn analyze_lists_mismatched_runs() {
    let tmp = TempDir::new().unwrap();
    let (a, b, junk) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("junk"),
    );
    assert_eq!(code(&train(&a, &SHORT)), 0);
    assert_eq!(
        code(&train(
            &b,
            &["--set", "run.n_steps=3000", "--set", "run.checkpoints=3"]
        )),
        0
    );
    fs::create_dir(&junk).unwrap();
    fs::write(junk.join("timeseries.csv"), "step,foo\n1,2\n").unwrap();
    let o = ggtde(&[
        "analyze",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        junk.to_str().unwrap(),
        "--out",
        tmp.path().join("report").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("schema mismatch"), "{err}");
    assert!(
        err.contains("junk") && err.contains(&format!("{}", b.join("timeseries.csv").display())),
        "{err}"
    );
    assert!(!tmp.path().join("report").exists());
}
