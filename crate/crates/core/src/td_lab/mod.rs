//! Small-scale TD-learning testbed: noisy chain MDPs, ensembled critics with
//! distribution heads, and a seeded training loop with exact value oracles.

pub mod env;
pub mod experiment;
pub mod network;
pub mod train;

pub use env::{
    policy_evaluation, value_iteration, ChainEnv, ChainMdpSpec, RewardNoise, Transition,
};
pub use experiment::{
    read_run_metadata, read_timeseries, run_experiment, AgentConfig, Behavior, Checkpoint,
    ExperimentConfig, Learner, LossConfig, RunConfig, TimeseriesRow, TrainRunLog,
    TIMESERIES_HEADER,
};
pub use network::{CriticEnsemble, CriticOutput, HeadKind, NetworkShape};
pub use train::{
    freeze, loss_and_grad, td_error, td_errors, td_target, train_step, FrozenStep, LossDiagnostics,
    LossKind, LossSpec, Optimizer, OptimizerKind, StepInputs, TargetTable,
};
