use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use ggtde_core::estimators::{
    mbbe_optimality_experiment, prop1_bias_experiment, MbbeOutcome, Prop1Outcome, ShrinkChoice,
};
use ggtde_core::ggd::{self, GgdParams};
use serde::Serialize;

use crate::failure::{CmdResult, Failure, Outcome};
use crate::output::emit;

pub const MIN_TRIALS: usize = 1000;

/// `ggd:mu,alpha,beta`, `gaussian:mu,sigma` or `laplace:mu,scale`.
#[derive(Debug, Clone, Copy)]
pub struct DistArg(pub GgdParams);

impl FromStr for DistArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, rest) = s
            .split_once(':')
            .ok_or("expected family:params, e.g. ggd:0,1,1")?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad number {x:?}"))
            })
            .collect::<Result<_, _>>()?;
        let params = match (family, nums.as_slice()) {
            ("ggd", [mu, alpha, beta]) => GgdParams::new(*mu, *alpha, *beta),
            ("gaussian", [mu, sigma]) => GgdParams::new(*mu, sigma * std::f64::consts::SQRT_2, 2.0),
            ("laplace", [mu, scale]) => GgdParams::new(*mu, *scale, 1.0),
            _ => return Err(format!("unknown distribution {s:?}")),
        };
        params.map(DistArg).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value = "ggd:0,1,1")]
    pub dist: DistArg,
    /// Samples per trial.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct Population {
    variance: f64,
    excess_kurtosis: f64,
}

#[derive(Debug, Serialize)]
struct EstimatorsReport {
    dist: GgdParams,
    n: usize,
    trials: usize,
    seed: u64,
    population: Population,
    bias: Prop1Outcome,
    mbbe: MbbeOutcome,
}

pub fn run(args: &EstimatorArgs) -> CmdResult {
    if args.trials < MIN_TRIALS {
        return Err(Failure::input(format!(
            "insufficient trials: {} < {MIN_TRIALS}",
            args.trials
        )));
    }
    let dist = args.dist.0;
    let bias = prop1_bias_experiment(&dist, args.n, args.trials, args.seed)?;
    let mbbe =
        mbbe_optimality_experiment(&dist, args.n, args.trials, args.seed, ShrinkChoice::Optimal)?;
    let report = EstimatorsReport {
        dist,
        n: args.n,
        trials: args.trials,
        seed: args.seed,
        population: Population {
            variance: ggd::variance(&dist)?,
            excess_kurtosis: ggd::excess_kurtosis(dist.beta)?,
        },
        bias,
        mbbe,
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
    fn parses_families() {
        let g: DistArg = "ggd:0,1,1.5".parse().unwrap();
        assert_eq!((g.0.alpha, g.0.beta), (1.0, 1.5));
        let n: DistArg = "gaussian:0,1".parse().unwrap();
        assert!((ggd::variance(&n.0).unwrap() - 1.0).abs() < 1e-12);
        let l: DistArg = "laplace:0,2".parse().unwrap();
        assert!((ggd::variance(&l.0).unwrap() - 8.0).abs() < 1e-12);
        assert!("ggd:0,1".parse::<DistArg>().is_err());
        assert!("cauchy:0,1".parse::<DistArg>().is_err());
        assert!("ggd:0,-1,2".parse::<DistArg>().is_err());
    }
}
