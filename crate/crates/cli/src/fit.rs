use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ggtde_core::ggd::{self, FitMode, FitResult, GgdParams};
use serde::Serialize;

use crate::failure::{CmdResult, Failure, Outcome};
use crate::output::{emit, fmt_num, prepare_file};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    #[value(name = "beta-only", alias = "beta_only")]
    BetaOnly,
    #[value(name = "alpha-beta", alias = "alpha_beta")]
    AlphaBeta,
}

impl From<ModeArg> for FitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::BetaOnly => FitMode::BetaOnly,
            ModeArg::AlphaBeta => FitMode::AlphaBeta,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One-column CSV of errors; a non-numeric first row is taken as a header.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "alpha-beta")]
    pub mode: ModeArg,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Histogram CSV path. Defaults to `<out stem>.hist.csv` next to the report.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct GaussianFit {
    mean: f64,
    std_dev: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    input: String,
    n: usize,
    mode: FitMode,
    fit: FitResult,
    gaussian: GaussianFit,
    histogram: Option<String>,
}

/// Reads the first column of a CSV as numbers.
pub fn read_column(path: &Path) -> Result<Vec<f64>, Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut xs = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let Some(field) = rec.get(0).map(str::trim).filter(|f| !f.is_empty()) else {
            continue;
        };
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => xs.push(x),
            Ok(_) => {
                return Err(Failure::input(format!(
                    "{}: non-finite value on line {}",
                    path.display(),
                    line + 1
                )))
            }
            Err(_) if line == 0 => {}
            Err(_) => {
                return Err(Failure::input(format!(
                    "{}: cannot parse {field:?} on line {}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    if xs.len() < 10 {
        return Err(Failure::input(format!(
            "{}: need at least 10 rows, found {}",
            path.display(),
            xs.len()
        )));
    }
    Ok(xs)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Histogram over the central 99% of the data with fitted densities at bin centres.
fn histogram_csv(
    xs: &[f64],
    bins: usize,
    fitted: &GgdParams,
    gauss: &GaussianFit,
) -> Result<String, Failure> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (quantile(&sorted, 0.005), quantile(&sorted, 0.995));
    if hi <= lo {
        lo = sorted[0];
        hi = sorted[sorted.len() - 1];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &sorted {
        if x < lo || x > hi {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = xs.len() as f64;
    let mut out =
        String::from("bin_left,bin_right,empirical_density,ggd_density,gaussian_density\n");
    for (b, c) in counts.iter().enumerate() {
        let left = lo + b as f64 * width;
        let right = left + width;
        let mid = 0.5 * (left + right);
        let z = (mid - gauss.mean) / gauss.std_dev;
        let gauss_pdf =
            (-0.5 * z * z).exp() / (gauss.std_dev * (2.0 * std::f64::consts::PI).sqrt());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_num(left),
            fmt_num(right),
            fmt_num(*c as f64 / (n * width)),
            fmt_num(ggd::pdf(mid, fitted)?),
            fmt_num(gauss_pdf)
        ));
    }
    Ok(out)
}

pub fn run(args: &FitArgs) -> CmdResult {
    if args.bins == 0 {
        return Err(Failure::input("--bins must be positive"));
    }
    let xs = read_column(&args.input)?;
    let mode = FitMode::from(args.mode);
    let fit = ggd::fit_mle(&xs, mode)?;
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    let gaussian = GaussianFit {
        mean,
        std_dev: var.sqrt(),
    };
    let hist_path = args
        .histogram
        .clone()
        .or_else(|| args.out.as_ref().map(|o| o.with_extension("hist.csv")));
    if let Some(p) = &hist_path {
        prepare_file(p, args.force)?;
        if gaussian.std_dev > 0.0 {
            std::fs::write(p, histogram_csv(&xs, args.bins, &fit.params, &gaussian)?)?;
        } else {
            return Err(Failure::input(
                "sample has zero spread; no histogram possible",
            ));
        }
    }
    log::info!(
        "fitted alpha={} beta={} in {} iterations",
        fit.params.alpha,
        fit.params.beta,
        fit.iterations
    );
    let report = FitReport {
        input: args.input.display().to_string(),
        n: xs.len(),
        mode,
        fit,
        gaussian,
        histogram: hist_path.map(|p| p.display().to_string()),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(args.out.as_deref(), &text, args.force)?;
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert_eq!(quantile(&s, 0.125), 0.5);
        assert_eq!(quantile(&s, 1.0), 4.0);
    }

    #[test]
    fn histogram_density_integrates_to_covered_mass() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0) * 2.0 - 1.0).collect();
        let p = GgdParams::zero_mean(1.0, 2.0).unwrap();
        let g = GaussianFit {
            mean: 0.0,
            std_dev: 0.58,
        };
        let csv = histogram_csv(&xs, 10, &p, &g).unwrap();
        let mass: f64 = csv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                f[2] * (f[1] - f[0])
            })
            .sum();
        assert!((mass - 0.99).abs() < 0.01, "{mass}");
    }
}
