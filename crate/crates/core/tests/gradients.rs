//! Analytic parameter gradients of every training loss against central
//! finite differences, with the per-batch weights held fixed.

use ggtde_core::ggd::NllForm;
use ggtde_core::td_lab::{
    freeze, loss_and_grad, CriticEnsemble, HeadKind, LossKind, LossSpec, NetworkShape, StepInputs,
};
use ggtde_core::weighting::{RaMode, RegLoss, WeightingConfig, XiMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROBES: usize = 20;

fn setup(head: HeadKind, seed: u64) -> (CriticEnsemble, StepInputs) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = NetworkShape {
        feature_dim: 8,
        hidden_dim: 6,
        head_kind: head,
        softplus_epsilon: 0.05,
    };
    let mut ens = CriticEnsemble::new(5, shape, 1.0, &mut rng).unwrap();
    // Move away from the small-output initialisation so every layer matters.
    for i in 0..ens.n_params() {
        *ens.param_mut(i) += rng.random_range(-0.3..0.3);
    }
    let b = 24;
    let inputs = StepInputs {
        inputs: (0..b).map(|_| rng.random_range(0..8)).collect(),
        targets: (0..5)
            .map(|_| (0..b).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect(),
        value_variance: (0..b).map(|_| rng.random_range(0.0..0.4)).collect(),
    };
    (ens, inputs)
}

fn check(kind: LossKind, head: HeadKind, form: NllForm, weighting: WeightingConfig, seed: u64) {
    let (ens, inputs) = setup(head, seed);
    let spec = LossSpec {
        kind,
        form,
        weighting,
    };
    let frozen = freeze(&ens, &inputs, &spec).unwrap();
    let (_, grads) = loss_and_grad(&ens, &inputs, &frozen, &spec, true).unwrap();
    let flat: Vec<f64> = grads.concat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let h = 1e-6;
    for _ in 0..PROBES {
        let i = rng.random_range(0..ens.n_params());
        let eval = |delta: f64| {
            let mut e = ens.clone();
            *e.param_mut(i) += delta;
            loss_and_grad(&e, &inputs, &frozen, &spec, false)
                .unwrap()
                .0
                .total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let err = (fd - flat[i]).abs();
        assert!(
            err <= 1e-4 * fd.abs().max(flat[i].abs()) || err < 1e-8,
            "{kind:?}/{head:?}/{form:?} param {i}: analytic {} vs fd {fd}",
            flat[i]
        );
    }
}

fn cfg() -> WeightingConfig {
    WeightingConfig {
        xi_mode: XiMode::Solve {
            min_effective_batch: 8,
        },
        ..WeightingConfig::default()
    }
}

#[test]
fn mse() {
    check(LossKind::Mse, HeadKind::None, NllForm::Modified, cfg(), 1);
}

#[test]
fn gaussian_nll_biv() {
    check(
        LossKind::GaussianNllBiv,
        HeadKind::Variance,
        NllForm::Modified,
        cfg(),
        2,
    );
}

#[test]
fn ggd_nll_biev_both_forms() {
    check(
        LossKind::GgdNllBiev,
        HeadKind::Beta,
        NllForm::Modified,
        cfg(),
        3,
    );
    check(
        LossKind::GgdNllBiev,
        HeadKind::Beta,
        NllForm::Exact,
        cfg(),
        4,
    );
}

#[test]
fn ggd_nll_biev_with_alpha_head() {
    check(
        LossKind::GgdNllBiev,
        HeadKind::AlphaBeta,
        NllForm::Modified,
        cfg(),
        5,
    );
    check(
        LossKind::GgdNllBiev,
        HeadKind::AlphaBeta,
        NllForm::Exact,
        cfg(),
        6,
    );
}

#[test]
fn ggd_nll_biev_ablations() {
    let seeking = WeightingConfig {
        ra_mode: RaMode::RiskSeeking,
        reg_loss: RegLoss::Absolute,
        ..cfg()
    };
    check(
        LossKind::GgdNllBiev,
        HeadKind::Beta,
        NllForm::Modified,
        seeking,
        7,
    );
}

#[test]
fn ggd_nll_only() {
    check(
        LossKind::GgdNllOnly,
        HeadKind::Beta,
        NllForm::Modified,
        cfg(),
        8,
    );
    check(
        LossKind::GgdNllOnly,
        HeadKind::Beta,
        NllForm::Exact,
        cfg(),
        9,
    );
}
