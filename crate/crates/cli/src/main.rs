mod analyze;
mod dominance;
mod estimators;
mod failure;
mod fit;
mod output;
mod svg;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Generalized Gaussian tools for temporal-difference errors.
#[derive(Debug, Parser)]
#[command(name = "ggtde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a zero-mean GGD to a one-column CSV of errors.
    Fit(fit::FitArgs),
    /// Tabulate the second-order dominance integral between two shapes.
    Dominance(dominance::DominanceArgs),
    /// Monte-Carlo checks of variance-estimator bias and MBBE efficiency.
    Estimators(estimators::EstimatorArgs),
    /// Run one seeded TD-learning experiment.
    Train(train::TrainArgs),
    /// Aggregate run directories into median/SD tables and charts.
    Analyze(analyze::AnalyzeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GGTDE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit::run(&a),
        Command::Dominance(a) => dominance::run(&a),
        Command::Estimators(a) => estimators::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Analyze(a) => analyze::run(&a),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.outcome as u8)
        }
    }
}
