//! Deterministic inputs shared by the benchmarks.

use ggtde_core::td_lab::{CriticEnsemble, HeadKind, NetworkShape, StepInputs};
use ggtde_core::TdErrorBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A TD-error batch with plausible heads and ensemble statistics.
pub fn td_batch(n: usize, seed: u64) -> TdErrorBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = TdErrorBatch::new(
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        (0..n).map(|_| rng.random_range(0.0..0.5)).collect(),
        (0..n).map(|_| rng.random_range(0.01..1.0)).collect(),
        (0..n).map(|_| rng.random_range(0.5..3.0)).collect(),
    )
    .expect("valid batch");
    batch.error_kurtosis = Some((0..n).map(|_| rng.random_range(-1.0..3.0)).collect());
    batch
}

/// A five-critic ensemble over `features` one-hot inputs.
pub fn ensemble(features: usize, hidden: usize, head_kind: HeadKind, seed: u64) -> CriticEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = NetworkShape {
        feature_dim: features,
        hidden_dim: hidden,
        head_kind,
        softplus_epsilon: 0.05,
    };
    CriticEnsemble::new(5, shape, 1.0, &mut rng).expect("valid shape")
}

/// A minibatch with random inputs and bootstrap targets for five critics.
pub fn step_inputs(features: usize, batch: usize, seed: u64) -> StepInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StepInputs {
        inputs: (0..batch).map(|_| rng.random_range(0..features)).collect(),
        targets: (0..5)
            .map(|_| (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
        value_variance: (0..batch).map(|_| rng.random_range(0.0..0.5)).collect(),
    }
}
