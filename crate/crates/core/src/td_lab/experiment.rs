//! Experiment configuration, the training loop and run-log persistence.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{
    argmax, greedy_policy, policy_evaluation, value_iteration, ChainEnv, ChainMdpSpec, Transition,
};
use super::network::{CriticEnsemble, HeadKind, Input, NetworkShape};
use super::train::{
    across_variance, train_step, LossKind, LossSpec, Optimizer, OptimizerKind, StepInputs,
    TargetTable,
};
use crate::error::{Error, Result};
use crate::estimators::coefficient_of_variation;
use crate::ggd::{self, FitMode, GgdParams, NllForm};
use crate::weighting::WeightingConfig;

/// Columns of `timeseries.csv`, in order.
pub const TIMESERIES_HEADER: [&str; 6] = [
    "step",
    "return",
    "cov_beta",
    "cov_variance",
    "value_rmse",
    "loss",
];
pub const RUN_FORMAT: &str = "ggtde-run/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    Uniform,
    EpsilonGreedy { epsilon: f64 },
}

impl Default for Behavior {
    fn default() -> Self {
        Behavior::EpsilonGreedy { epsilon: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Learner {
    /// Greedy bootstrap over the ensemble-mean target values.
    QLearning {
        #[serde(default)]
        behavior: Behavior,
    },
    /// Tabular softmax actor; the critic evaluates the actor with expected
    /// targets. `actor_lr = 0` keeps the uniform policy fixed.
    ActorCritic { actor_lr: f64 },
}

impl Default for Learner {
    fn default() -> Self {
        Learner::QLearning {
            behavior: Behavior::default(),
        }
    }
}

fn d_n_critics() -> usize {
    5
}
fn d_hidden() -> usize {
    32
}
fn d_lr() -> f64 {
    1e-3
}
fn d_batch() -> usize {
    32
}
fn d_capacity() -> usize {
    10_000
}
fn d_refresh() -> usize {
    100
}
fn d_eps() -> f64 {
    ggd::BETA_MIN
}
fn d_init() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub learner: Learner,
    #[serde(default = "d_n_critics")]
    pub n_critics: usize,
    #[serde(default = "d_hidden")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "d_lr")]
    pub lr: f64,
    /// Step size decays as lr / (1 + step / lr_decay_steps) when set.
    #[serde(default)]
    pub lr_decay_steps: Option<f64>,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "d_refresh")]
    pub target_refresh: usize,
    #[serde(default = "d_eps")]
    pub softplus_epsilon: f64,
    #[serde(default = "d_init")]
    pub init_scale: f64,
    /// Adds a Q^α head next to Q^β for the GGD losses.
    #[serde(default)]
    pub alpha_head: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "d_loss_kind")]
    pub kind: LossKind,
    #[serde(default)]
    pub nll_form: NllForm,
}

fn d_loss_kind() -> LossKind {
    LossKind::GgdNllBiev
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: d_loss_kind(),
            nll_form: NllForm::default(),
        }
    }
}

fn d_steps() -> usize {
    50_000
}
fn d_checkpoints() -> usize {
    10
}
fn d_snapshot() -> usize {
    2_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_steps")]
    pub n_steps: usize,
    #[serde(default = "d_checkpoints")]
    pub checkpoints: usize,
    #[serde(default)]
    pub seed: u64,
    /// Most recent transitions used for each TD-error snapshot.
    #[serde(default = "d_snapshot")]
    pub td_snapshot_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: ChainMdpSpec,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.weighting.validate()?;
        let a = &self.agent;
        let bad = |m: String| Err(Error::Config(m));
        if a.n_critics < 2 {
            return bad(format!("n_critics must be >= 2, got {}", a.n_critics));
        }
        if a.hidden_dim == 0 || a.batch_size == 0 || a.target_refresh == 0 {
            return bad("hidden_dim, batch_size and target_refresh must be positive".into());
        }
        if a.replay_capacity < a.batch_size {
            return bad("replay_capacity must be >= batch_size".into());
        }
        if !(a.lr.is_finite() && a.lr >= 0.0) {
            return bad(format!("lr must be finite and >= 0, got {}", a.lr));
        }
        if let Some(d) = a.lr_decay_steps {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("lr_decay_steps must be > 0, got {d}"));
            }
        }
        match a.learner {
            Learner::QLearning {
                behavior: Behavior::EpsilonGreedy { epsilon },
            } if !(0.0..=1.0).contains(&epsilon) => {
                return bad(format!("epsilon must lie in [0, 1], got {epsilon}"))
            }
            Learner::ActorCritic { actor_lr } if !(actor_lr.is_finite() && actor_lr >= 0.0) => {
                return bad(format!("actor_lr must be finite and >= 0, got {actor_lr}"))
            }
            _ => {}
        }
        if let crate::weighting::XiMode::Solve {
            min_effective_batch,
        } = self.weighting.xi_mode
        {
            let uses_xi = matches!(
                self.loss.kind,
                LossKind::GaussianNllBiv | LossKind::GgdNllBiev | LossKind::GgdNllOnly
            );
            if uses_xi && min_effective_batch > a.batch_size {
                return bad(format!(
                    "min_effective_batch {min_effective_batch} exceeds batch_size {}",
                    a.batch_size
                ));
            }
        }
        if self.run.checkpoints == 0 || self.run.checkpoints > self.run.n_steps {
            return bad("checkpoints must lie in [1, n_steps]".into());
        }
        if self.run.td_snapshot_size < 10 {
            return bad("td_snapshot_size must be >= 10".into());
        }
        Ok(())
    }

    fn loss_spec(&self) -> LossSpec {
        LossSpec {
            kind: self.loss.kind,
            form: self.loss.nll_form,
            weighting: self.weighting,
        }
    }
}

/// State of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    /// Exact expected discounted return of the current policy from a
    /// uniformly drawn start state.
    pub episodic_return: f64,
    /// RMSE of the ensemble-mean Q against the exact oracle.
    pub value_rmse: f64,
    pub cov_beta: Option<f64>,
    pub cov_variance: Option<f64>,
    /// Mean training objective since the previous checkpoint.
    pub loss: Option<f64>,
    /// Ensemble-mean β head over every state-action pair.
    pub beta_estimates: Vec<f64>,
    /// Ensemble-mean aleatoric variance implied by the heads.
    pub variance_estimates: Vec<f64>,
    /// β̂ of a GGD fitted to the TD-error snapshot.
    pub fitted_beta: Option<f64>,
    #[serde(skip)]
    pub td_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunLog {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainRunLog {
    pub fn steps(&self) -> Vec<usize> {
        self.checkpoints.iter().map(|c| c.step).collect()
    }

    pub fn episodic_return(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.episodic_return).collect()
    }

    pub fn value_rmse_vs_oracle(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.value_rmse).collect()
    }

    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("a run has at least one checkpoint")
    }

    /// TD-error snapshots tagged `initial`, `final` or `step_<n>`.
    pub fn td_error_snapshots(&self) -> Vec<(String, &[f64])> {
        let last = self.checkpoints.len() - 1;
        self.checkpoints
            .iter()
            .enumerate()
            .map(|(i, c)| (snapshot_tag(i, last, c.step), c.td_errors.as_slice()))
            .collect()
    }
}

fn snapshot_tag(i: usize, last: usize, step: usize) -> String {
    if i == last {
        "final".into()
    } else if i == 0 {
        "initial".into()
    } else {
        format!("step_{step}")
    }
}

struct Replay {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl Replay {
    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// The most recent `n` transitions, oldest first.
    fn recent(&self, n: usize) -> Vec<Transition> {
        let len = self.items.len();
        let n = n.min(len);
        (0..n)
            .map(|j| self.items[(self.next + len - n + j) % len])
            .collect()
    }
}

struct Agent {
    spec: ChainMdpSpec,
    cfg: ExperimentConfig,
    ensemble: CriticEnsemble,
    target: TargetTable,
    optimizer: Optimizer,
    actor_logits: Vec<f64>,
    rng: ChaCha8Rng,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

impl Agent {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.env;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
        let shape = NetworkShape {
            feature_dim: spec.n_pairs(),
            hidden_dim: cfg.agent.hidden_dim,
            head_kind: cfg.loss.kind.head_kind(cfg.agent.alpha_head),
            softplus_epsilon: cfg.agent.softplus_epsilon,
        };
        let ensemble =
            CriticEnsemble::new(cfg.agent.n_critics, shape, cfg.agent.init_scale, &mut rng)?;
        let target = TargetTable::snapshot(&ensemble)?;
        let optimizer = Optimizer::new(cfg.agent.optimizer, &ensemble);
        Ok(Self {
            spec,
            cfg: *cfg,
            ensemble,
            target,
            optimizer,
            actor_logits: vec![0.0; spec.n_pairs()],
            rng,
        })
    }

    fn actor_policy(&self, s: usize) -> Vec<f64> {
        let i = self.spec.sa_index(s, 0);
        softmax(&self.actor_logits[i..i + self.spec.n_actions])
    }

    fn online_mean_q(&self) -> Result<Vec<f64>> {
        (0..self.spec.n_pairs())
            .map(|i| {
                let out = self.ensemble.forward_input(Input::OneHot(i))?;
                Ok(out.iter().map(|o| o.value).sum::<f64>() / out.len() as f64)
            })
            .collect()
    }

    fn act(&mut self, s: usize) -> Result<usize> {
        let n_a = self.spec.n_actions;
        match self.cfg.agent.learner {
            Learner::QLearning {
                behavior: Behavior::Uniform,
            } => Ok(self.rng.random_range(0..n_a)),
            Learner::QLearning {
                behavior: Behavior::EpsilonGreedy { epsilon },
            } => {
                if self.rng.random::<f64>() < epsilon {
                    return Ok(self.rng.random_range(0..n_a));
                }
                let q: Vec<f64> = (0..n_a)
                    .map(|a| {
                        let out = self
                            .ensemble
                            .forward_input(Input::OneHot(self.spec.sa_index(s, a)))?;
                        Ok(out.iter().map(|o| o.value).sum::<f64>() / out.len() as f64)
                    })
                    .collect::<Result<_>>()?;
                Ok(argmax(&q))
            }
            Learner::ActorCritic { .. } => {
                let pi = self.actor_policy(s);
                let u: f64 = self.rng.random();
                let mut acc = 0.0;
                for (a, p) in pi.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(a);
                    }
                }
                Ok(n_a - 1)
            }
        }
    }

    /// Per-critic bootstrapped value of `s'` from the frozen table.
    fn next_values(&self, s_next: usize) -> Vec<f64> {
        let n_a = self.spec.n_actions;
        let base = self.spec.sa_index(s_next, 0);
        match self.cfg.agent.learner {
            Learner::QLearning { .. } => {
                let means: Vec<f64> = (0..n_a).map(|a| self.target.mean(base + a)).collect();
                let best = base + argmax(&means);
                self.target.values.iter().map(|v| v[best]).collect()
            }
            Learner::ActorCritic { .. } => {
                let pi = self.actor_policy(s_next);
                self.target
                    .values
                    .iter()
                    .map(|v| (0..n_a).map(|a| pi[a] * v[base + a]).sum())
                    .collect()
            }
        }
    }

    fn step_inputs(&self, batch: &[Transition]) -> StepInputs {
        let k_n = self.ensemble.n_critics();
        let mut targets = vec![Vec::with_capacity(batch.len()); k_n];
        let mut value_variance = Vec::with_capacity(batch.len());
        let mut inputs = Vec::with_capacity(batch.len());
        for tr in batch {
            let next = self.next_values(tr.next_state);
            for (k, nv) in next.iter().enumerate() {
                targets[k].push(super::train::td_target(tr.reward, *nv, self.spec.discount));
            }
            value_variance.push(across_variance(&next));
            inputs.push(self.spec.sa_index(tr.state, tr.action));
        }
        StepInputs {
            inputs,
            targets,
            value_variance,
        }
    }

    fn update_actor(&mut self, batch: &[Transition], actor_lr: f64) {
        if actor_lr == 0.0 {
            return;
        }
        let n_a = self.spec.n_actions;
        let scale = actor_lr / batch.len() as f64;
        for tr in batch {
            let base = self.spec.sa_index(tr.state, 0);
            let pi = self.actor_policy(tr.state);
            let q: Vec<f64> = (0..n_a).map(|a| self.target.mean(base + a)).collect();
            let v: f64 = pi.iter().zip(&q).map(|(p, q)| p * q).sum();
            let adv = q[tr.action] - v;
            for b in 0..n_a {
                let ind = if b == tr.action { 1.0 } else { 0.0 };
                self.actor_logits[base + b] += scale * adv * (ind - pi[b]);
            }
        }
    }

    fn current_policy(&self, q_mean: &[f64]) -> Vec<Vec<f64>> {
        match self.cfg.agent.learner {
            Learner::QLearning { .. } => greedy_policy(&self.spec, q_mean),
            Learner::ActorCritic { .. } => (0..self.spec.n_states)
                .map(|s| self.actor_policy(s))
                .collect(),
        }
    }

    /// Ensemble-mean β and aleatoric variance per state-action pair.
    fn head_estimates(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let kind = self.ensemble.head_kind();
        if kind == HeadKind::None {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut betas = Vec::new();
        let mut vars = Vec::with_capacity(self.spec.n_pairs());
        for i in 0..self.spec.n_pairs() {
            let outs = self.ensemble.forward_input(Input::OneHot(i))?;
            let k = outs.len() as f64;
            let (mut b_sum, mut v_sum) = (0.0, 0.0);
            for o in &outs {
                let (alpha, beta) = match kind {
                    HeadKind::Variance => {
                        v_sum += o.heads[0] * o.heads[0];
                        continue;
                    }
                    HeadKind::Beta => (1.0, o.heads[0]),
                    HeadKind::AlphaBeta => (o.heads[0], o.heads[1]),
                    HeadKind::None => unreachable!(),
                };
                b_sum += beta;
                v_sum += ggd::variance(&GgdParams::zero_mean(alpha, beta)?)?;
            }
            if kind != HeadKind::Variance {
                betas.push(b_sum / k);
            }
            vars.push(v_sum / k);
        }
        Ok((betas, vars))
    }

    /// Ensemble-mean TD errors over a set of transitions.
    fn td_snapshot(&self, transitions: &[Transition]) -> Result<Vec<f64>> {
        transitions
            .iter()
            .map(|tr| {
                let next = self.next_values(tr.next_state);
                let outs = self
                    .ensemble
                    .forward_input(Input::OneHot(self.spec.sa_index(tr.state, tr.action)))?;
                let k = outs.len() as f64;
                Ok(outs
                    .iter()
                    .zip(&next)
                    .map(|(o, nv)| {
                        super::train::td_error(
                            super::train::td_target(tr.reward, *nv, self.spec.discount),
                            o.value,
                        )
                    })
                    .sum::<f64>()
                    / k)
            })
            .collect()
    }
}

fn env_seed(spec_seed: u64, run_seed: u64) -> u64 {
    spec_seed ^ run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs one seeded training experiment. Identical configs give identical logs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrainRunLog> {
    cfg.validate()?;
    let spec = cfg.env;
    let mut env = ChainEnv::with_seed(spec, env_seed(spec.seed, cfg.run.seed))?;
    let mut agent = Agent::new(cfg)?;
    let loss = cfg.loss_spec();
    let q_star = match cfg.agent.learner {
        Learner::QLearning { .. } => Some(value_iteration(&spec)?),
        Learner::ActorCritic { .. } => None,
    };
    let mut replay = Replay {
        items: Vec::with_capacity(cfg.agent.replay_capacity.min(cfg.run.n_steps)),
        capacity: cfg.agent.replay_capacity,
        next: 0,
    };
    let n_steps = cfg.run.n_steps;
    let n_ck = cfg.run.checkpoints;
    let checkpoint_steps: Vec<usize> = (1..=n_ck).map(|c| c * n_steps / n_ck).collect();
    let mut next_ck = 0;
    let mut checkpoints = Vec::with_capacity(n_ck);
    let (mut window_loss, mut window_n) = (0.0, 0usize);
    let mut batch = Vec::with_capacity(cfg.agent.batch_size);

    for step in 1..=n_steps {
        let s = env.state();
        let a = agent.act(s)?;
        let (tr, truncated) = env.step(a)?;
        replay.push(tr);
        if truncated {
            env.reset();
        }

        if replay.items.len() >= cfg.agent.batch_size {
            batch.clear();
            for _ in 0..cfg.agent.batch_size {
                let j = agent.rng.random_range(0..replay.items.len());
                batch.push(replay.items[j]);
            }
            let inputs = agent.step_inputs(&batch);
            let lr = match cfg.agent.lr_decay_steps {
                Some(d) => cfg.agent.lr / (1.0 + step as f64 / d),
                None => cfg.agent.lr,
            };
            let diag = train_step(
                &mut agent.ensemble,
                &inputs,
                &loss,
                &mut agent.optimizer,
                lr,
                step,
            )?;
            window_loss += diag.total;
            window_n += 1;
            if let Learner::ActorCritic { actor_lr } = cfg.agent.learner {
                agent.update_actor(&batch, actor_lr);
            }
        }
        if step % cfg.agent.target_refresh == 0 {
            agent.target = TargetTable::snapshot(&agent.ensemble)?;
        }

        while next_ck < n_ck && checkpoint_steps[next_ck] == step {
            next_ck += 1;
            let q_mean = agent.online_mean_q()?;
            let policy = agent.current_policy(&q_mean);
            let v_pi = policy_evaluation(&spec, &policy)?;
            let episodic_return = v_pi.iter().sum::<f64>() / v_pi.len() as f64;
            let oracle = match &q_star {
                Some(q) => q.clone(),
                None => spec.q_from_v(&v_pi),
            };
            let value_rmse = (q_mean
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / q_mean.len() as f64)
                .sqrt();
            let (beta_estimates, variance_estimates) = agent.head_estimates()?;
            let td_errors = agent.td_snapshot(&replay.recent(cfg.run.td_snapshot_size))?;
            let fitted_beta = ggd::fit_mle(&td_errors, FitMode::AlphaBeta)
                .ok()
                .map(|f| f.params.beta);
            checkpoints.push(Checkpoint {
                step,
                episodic_return,
                value_rmse,
                cov_beta: coefficient_of_variation(&beta_estimates).ok(),
                cov_variance: coefficient_of_variation(&variance_estimates).ok(),
                loss: (window_n > 0).then(|| window_loss / window_n as f64),
                beta_estimates,
                variance_estimates,
                fitted_beta,
                td_errors,
            });
            window_loss = 0.0;
            window_n = 0;
        }
    }
    Ok(TrainRunLog {
        config: *cfg,
        checkpoints,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotEntry {
    tag: String,
    step: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunFinal {
    episodic_return: f64,
    value_rmse: f64,
    fitted_beta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunJson {
    format: String,
    config: ExperimentConfig,
    #[serde(rename = "final")]
    final_: RunFinal,
    checkpoints: Vec<Checkpoint>,
    td_snapshots: Vec<SnapshotEntry>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".to_string(), |v| v.to_string())
}

fn parse_opt(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl TrainRunLog {
    /// Writes `run.json`, `timeseries.csv` and one `td_errors_<step>.csv`
    /// per checkpoint. An existing non-empty directory is only reused when
    /// `overwrite` is set.
    pub fn write_dir(&self, dir: &Path, overwrite: bool) -> Result<()> {
        if dir.exists() && fs::read_dir(dir)?.next().is_some() && !overwrite {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass the force flag to overwrite",
                dir.display()
            )));
        }
        fs::create_dir_all(dir)?;

        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(dir.join("timeseries.csv"))?;
        w.write_record(TIMESERIES_HEADER)?;
        for c in &self.checkpoints {
            w.write_record([
                c.step.to_string(),
                c.episodic_return.to_string(),
                fmt_opt(c.cov_beta),
                fmt_opt(c.cov_variance),
                c.value_rmse.to_string(),
                fmt_opt(c.loss),
            ])?;
        }
        w.flush()?;

        let mut snapshots = Vec::new();
        for (i, c) in self.checkpoints.iter().enumerate() {
            let file = format!("td_errors_{}.csv", c.step);
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(dir.join(&file))?;
            w.write_record(["td_error"])?;
            for d in &c.td_errors {
                w.write_record([d.to_string()])?;
            }
            w.flush()?;
            snapshots.push(SnapshotEntry {
                tag: snapshot_tag(i, self.checkpoints.len() - 1, c.step),
                step: c.step,
                file,
            });
        }

        let last = self.final_checkpoint();
        let run = RunJson {
            format: RUN_FORMAT.into(),
            config: self.config,
            final_: RunFinal {
                episodic_return: last.episodic_return,
                value_rmse: last.value_rmse,
                fitted_beta: last.fitted_beta,
            },
            checkpoints: self.checkpoints.clone(),
            td_snapshots: snapshots,
        };
        let mut text = serde_json::to_string_pretty(&run)?;
        text.push('\n');
        fs::write(dir.join("run.json"), text)?;
        Ok(())
    }
}

/// One row of `timeseries.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeseriesRow {
    pub step: usize,
    pub episodic_return: f64,
    pub cov_beta: Option<f64>,
    pub cov_variance: Option<f64>,
    pub value_rmse: f64,
    pub loss: Option<f64>,
}

/// Reads `timeseries.csv` from a run directory, checking the header.
pub fn read_timeseries(dir: &Path) -> Result<Vec<TimeseriesRow>> {
    let path = dir.join("timeseries.csv");
    let schema =
        |why: String| Error::Config(format!("schema mismatch in {}: {why}", path.display()));
    let mut r = csv::Reader::from_path(&path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TIMESERIES_HEADER {
        return Err(schema(format!("header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| schema(format!("bad number {:?}", &rec[i])))
        };
        rows.push(TimeseriesRow {
            step: rec[0]
                .parse()
                .map_err(|_| schema(format!("bad step {:?}", &rec[0])))?,
            episodic_return: num(1)?,
            cov_beta: parse_opt(&rec[2]),
            cov_variance: parse_opt(&rec[3]),
            value_rmse: num(4)?,
            loss: parse_opt(&rec[5]),
        });
    }
    if rows.is_empty() {
        return Err(schema("no rows".into()));
    }
    Ok(rows)
}

/// Reads `run.json` as a loosely typed document after checking its format tag.
pub fn read_run_metadata(dir: &Path) -> Result<serde_json::Value> {
    let path = dir.join("run.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if v.get("format").and_then(|f| f.as_str()) != Some(RUN_FORMAT) {
        return Err(Error::Config(format!(
            "schema mismatch in {}: missing format tag",
            path.display()
        )));
    }
    Ok(v)
}
