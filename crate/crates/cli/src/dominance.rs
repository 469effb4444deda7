use std::path::PathBuf;

use clap::Args;
use ggtde_core::ggd;

use crate::failure::{CmdResult, Failure, Outcome};
use crate::output::{emit, fmt_num};

#[derive(Debug, Args)]
pub struct DominanceArgs {
    #[arg(long)]
    pub beta1: f64,
    #[arg(long)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Half-width of the grid in units of alpha.
    #[arg(long, default_value_t = 6.0)]
    pub span: f64,
    /// Values above −tol count as non-negative.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &DominanceArgs) -> CmdResult {
    if args.grid < 2 {
        return Err(Failure::input("--grid needs at least 2 points"));
    }
    if !(args.span.is_finite() && args.span > 0.0) || !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(Failure::input("--span must be > 0 and --tol >= 0"));
    }
    let half = args.span * args.alpha;
    let xs: Vec<f64> = (0..args.grid)
        .map(|i| -half + 2.0 * half * i as f64 / (args.grid - 1) as f64)
        .collect();
    let values = ggd::ssd_profile(args.beta1, args.beta2, args.alpha, &xs)?;

    let mut text = String::from("x,integral\n");
    for (x, v) in xs.iter().zip(&values) {
        text.push_str(&format!("{},{}\n", fmt_num(*x), fmt_num(*v)));
    }
    emit(args.out.as_deref(), &text, args.force)?;

    let (worst_x, worst) = xs
        .iter()
        .zip(&values)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(x, v)| (*x, *v))
        .expect("grid is non-empty");
    if worst < -args.tol {
        eprintln!(
            "dominance violated: integral {worst:e} at x = {worst_x} (beta1 = {}, beta2 = {})",
            args.beta1, args.beta2
        );
        return Ok(Outcome::Violation);
    }
    Ok(Outcome::Success)
}
