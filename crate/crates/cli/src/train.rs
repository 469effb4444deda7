use std::fs;
use std::path::PathBuf;

use clap::Args;
use ggtde_core::td_lab::run_experiment;
use ggtde_core::{Error, ExperimentConfig};
use serde_json::Value;

use crate::failure::{CmdResult, Failure, Outcome};
use crate::output::{fmt_num, prepare_dir};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-path override such as `weighting.lambda=0` or `loss.kind=mse`.
    /// Values are parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub force: bool,
}

/// Applies one `a.b.c=value` override, creating intermediate objects.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::input(format!("override {spec:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::input(format!(
            "override key {key:?} has an empty segment"
        )));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Failure::input(format!(
                "override {key:?} descends into a non-object"
            )));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(Failure::input(format!(
            "override {key:?} descends into a non-object"
        ))),
    }
}

pub fn load_config(args: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", args.config.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", args.config.display())))?;
    for o in &args.overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut doc, &format!("run.seed={seed}"))?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc)
        .map_err(|e| Failure::input(format!("{}: {e}", args.config.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs) -> CmdResult {
    let cfg = load_config(args)?;
    prepare_dir(&args.out, args.force)?;
    log::info!("training {:?} for {} steps", cfg.loss.kind, cfg.run.n_steps);
    let log = match run_experiment(&cfg) {
        Ok(log) => log,
        Err(e @ Error::Diverged { .. }) => {
            eprintln!("training diverged; no run directory written");
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    log.write_dir(&args.out, true)?;
    let last = log.final_checkpoint();
    println!("final return: {}", fmt_num(last.episodic_return));
    println!("final value RMSE: {}", fmt_num(last.value_rmse));
    println!(
        "final fitted beta: {}",
        last.fitted_beta.map_or("NaN".into(), fmt_num)
    );
    Ok(Outcome::Success)
}
