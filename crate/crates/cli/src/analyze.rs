use std::fs;
use std::path::PathBuf;

use clap::Args;
use ggtde_core::td_lab::{read_run_metadata, read_timeseries, TimeseriesRow};
use serde_json::Value;

use crate::failure::{CmdResult, Failure, Outcome};
use crate::output::{fmt_num, prepare_dir};
use crate::svg::{self, Chart};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directories written by `ggtde train`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the SVG charts.
    #[arg(long)]
    pub no_svg: bool,
    #[arg(long)]
    pub force: bool,
}

struct Run {
    dir: PathBuf,
    rows: Vec<TimeseriesRow>,
    meta: Value,
}

/// Median of the finite values, NaN when there are none.
pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sample standard deviation of the finite values; 0 for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    match v.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let m = v.iter().sum::<f64>() / n as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    }
}

type Metric = (&'static str, fn(&TimeseriesRow) -> f64);

const METRICS: [Metric; 5] = [
    ("return", |r| r.episodic_return),
    ("value_rmse", |r| r.value_rmse),
    ("cov_beta", |r| r.cov_beta.unwrap_or(f64::NAN)),
    ("cov_variance", |r| r.cov_variance.unwrap_or(f64::NAN)),
    ("loss", |r| r.loss.unwrap_or(f64::NAN)),
];

fn load(dirs: &[PathBuf]) -> Result<Vec<Run>, Failure> {
    let mut runs = Vec::new();
    let mut bad = Vec::new();
    for dir in dirs {
        match read_timeseries(dir).and_then(|rows| Ok((rows, read_run_metadata(dir)?))) {
            Ok((rows, meta)) => runs.push(Run {
                dir: dir.clone(),
                rows,
                meta,
            }),
            Err(e) => bad.push(format!("  {}: {e}", dir.display())),
        }
    }
    if let Some(first) = runs.first() {
        let steps: Vec<usize> = first.rows.iter().map(|r| r.step).collect();
        for r in &runs[1..] {
            if r.rows.iter().map(|r| r.step).ne(steps.iter().copied()) {
                bad.push(format!(
                    "  {}: checkpoint steps differ from {}",
                    r.dir.join("timeseries.csv").display(),
                    first.dir.display()
                ));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Failure::input(format!(
            "schema mismatch in:\n{}",
            bad.join("\n")
        )));
    }
    Ok(runs)
}

fn meta_str(meta: &Value, pointer: &str) -> String {
    match meta.pointer(pointer) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(v) => v.to_string(),
    }
}

fn mean_finite(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn cov_table(runs: &[Run]) -> String {
    let mut s = String::from(
        "run,loss_kind,ra_mode,lambda,seed,final_return,final_value_rmse,final_cov_beta,final_cov_variance,mean_cov_beta,mean_cov_variance\n",
    );
    for r in runs {
        let last = r.rows.last().expect("runs have rows");
        let cell = |p: &str| meta_str(&r.meta, p).replace(',', ";");
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.dir.display().to_string().replace(',', ";"),
            cell("/config/loss/kind"),
            cell("/config/weighting/ra_mode"),
            cell("/config/weighting/lambda"),
            cell("/config/run/seed"),
            fmt_num(last.episodic_return),
            fmt_num(last.value_rmse),
            fmt_num(last.cov_beta.unwrap_or(f64::NAN)),
            fmt_num(last.cov_variance.unwrap_or(f64::NAN)),
            fmt_num(mean_finite(r.rows.iter().filter_map(|x| x.cov_beta))),
            fmt_num(mean_finite(r.rows.iter().filter_map(|x| x.cov_variance))),
        ));
    }
    s
}

pub fn run(args: &AnalyzeArgs) -> CmdResult {
    let runs = load(&args.runs)?;
    prepare_dir(&args.out, args.force)?;
    let steps: Vec<f64> = runs[0].rows.iter().map(|r| r.step as f64).collect();
    let n_rows = steps.len();

    // stats[m] = (medians, sds, per-run series)
    let mut stats = Vec::with_capacity(METRICS.len());
    for (_, get) in METRICS {
        let series: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| r.rows.iter().map(get).collect())
            .collect();
        let mut med = Vec::with_capacity(n_rows);
        let mut sd = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            let column: Vec<f64> = series.iter().map(|s| s[i]).collect();
            med.push(median(&column));
            sd.push(std_dev(&column));
        }
        stats.push((med, sd, series));
    }

    let mut summary = String::from("step,n_runs");
    for (name, _) in METRICS {
        summary.push_str(&format!(",{name}_median,{name}_sd"));
    }
    summary.push('\n');
    for i in 0..n_rows {
        summary.push_str(&format!("{},{}", runs[0].rows[i].step, runs.len()));
        for (med, sd, _) in &stats {
            summary.push_str(&format!(",{},{}", fmt_num(med[i]), fmt_num(sd[i])));
        }
        summary.push('\n');
    }
    fs::write(args.out.join("summary.csv"), summary)?;
    fs::write(args.out.join("cov_table.csv"), cov_table(&runs))?;

    if !args.no_svg {
        for ((name, _), (med, sd, series)) in METRICS.iter().zip(&stats) {
            if med.iter().all(|m| !m.is_finite()) {
                continue;
            }
            let title = format!("{name}: median ± SD over {} run(s)", runs.len());
            let chart = Chart {
                title: &title,
                xs: &steps,
                runs: series,
                median: med,
                sd,
            };
            fs::write(args.out.join(format!("{name}.svg")), svg::render(&chart))?;
        }
    }
    println!("analyzed {} run(s) into {}", runs.len(), args.out.display());
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_sd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[f64::NAN, 5.0]), 5.0);
        assert!(median(&[]).is_nan());
        assert_eq!(std_dev(&[7.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
