use ggtde_core::estimators::sample_excess_kurtosis;
use ggtde_core::ggd;
use ggtde_core::td_lab::{
    read_run_metadata, read_timeseries, run_experiment, train_step, ChainEnv, ChainMdpSpec,
    CriticEnsemble, HeadKind, LossKind, LossSpec, NetworkShape, Optimizer, OptimizerKind,
    RewardNoise, StepInputs, TargetTable, TIMESERIES_HEADER,
};
use ggtde_core::ExperimentConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn config(doc: serde_json::Value) -> ExperimentConfig {
    serde_json::from_value(doc).unwrap()
}

fn chain(
    n_states: usize,
    noise: serde_json::Value,
    steps: usize,
    kind: &str,
    seed: u64,
) -> ExperimentConfig {
    config(json!({
        "env": {
            "n_states": n_states, "n_actions": 2, "discount": 0.9,
            "reward_noise": noise, "transition_noise": 0.0, "seed": 1, "horizon": 50
        },
        "agent": {
            "learner": {"q_learning": {"behavior": "uniform"}},
            "lr": 3e-4, "lr_decay_steps": 10000
        },
        "loss": {"kind": kind},
        "run": {"n_steps": steps, "checkpoints": 4, "seed": seed}
    }))
}

#[test]
fn noiseless_chain_is_deterministic() {
    let spec = ChainMdpSpec {
        n_states: 6,
        n_actions: 2,
        discount: 0.9,
        reward_noise: RewardNoise::Gaussian { sigma: 0.0 },
        transition_noise: 0.0,
        seed: 5,
        horizon: 20,
    };
    let rollout = || {
        let mut env = ChainEnv::new(spec).unwrap();
        (0..500)
            .map(|i| {
                let (t, done) = env.step((i * 7 / 3) % 2).unwrap();
                if done {
                    env.reset();
                }
                t
            })
            .collect::<Vec<_>>()
    };
    let a = rollout();
    assert_eq!(a, rollout());
    for t in &a {
        assert_eq!(t.reward, spec.mean_reward(t.state, t.action));
        assert_eq!(t.next_state, spec.intended_next(t.state, t.action));
    }
}

#[test]
fn ggd_reward_noise_has_the_closed_form_kurtosis() {
    let spec = ChainMdpSpec {
        n_states: 4,
        n_actions: 2,
        discount: 0.9,
        reward_noise: RewardNoise::Ggd {
            alpha: 1.0,
            beta: 0.8,
        },
        transition_noise: 0.0,
        seed: 17,
        horizon: 1000,
    };
    let mut env = ChainEnv::new(spec).unwrap();
    let noise: Vec<f64> = (0..1_000_000)
        .map(|i| {
            let (t, done) = env.step(i % 2).unwrap();
            if done {
                env.reset();
            }
            t.reward - spec.mean_reward(t.state, t.action)
        })
        .collect();
    let k = sample_excess_kurtosis(&noise).unwrap();
    let want = ggd::excess_kurtosis(0.8).unwrap();
    assert!((k / want - 1.0).abs() < 0.1, "{k} vs {want}");
}

#[test]
fn runs_are_reproducible_and_round_trip_to_disk() {
    let cfg = chain(
        5,
        json!({"laplace": {"scale": 1.0}}),
        3000,
        "ggd_nll_biev",
        4,
    );
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.steps(), vec![750, 1500, 2250, 3000]);

    let dir = tempfile::tempdir().unwrap();
    a.write_dir(dir.path(), false).unwrap();
    assert!(
        a.write_dir(dir.path(), false).is_err(),
        "refuses to overwrite"
    );
    a.write_dir(dir.path(), true).unwrap();

    let rows = read_timeseries(dir.path()).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, ck) in rows.iter().zip(&a.checkpoints) {
        assert_eq!(row.step, ck.step);
        assert_eq!(row.episodic_return, ck.episodic_return);
        assert_eq!(row.value_rmse, ck.value_rmse);
        assert_eq!(row.cov_beta, ck.cov_beta);
    }
    let text = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert!(text.starts_with(&TIMESERIES_HEADER.join(",")));
    assert!(!text.contains('\r'));

    let meta = read_run_metadata(dir.path()).unwrap();
    let back: ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(back, cfg);
    for (tag, deltas) in a.td_error_snapshots() {
        assert!(!deltas.is_empty(), "{tag}");
    }
    let last = a.final_checkpoint();
    let snap =
        std::fs::read_to_string(dir.path().join(format!("td_errors_{}.csv", last.step))).unwrap();
    let parsed: Vec<f64> = snap.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(parsed, last.td_errors);
}

#[test]
fn zero_lambda_matches_nll_only_trajectory() {
    let mut biev = chain(
        5,
        json!({"laplace": {"scale": 1.0}}),
        2000,
        "ggd_nll_biev",
        2,
    );
    biev.weighting.lambda = 0.0;
    let only = chain(
        5,
        json!({"laplace": {"scale": 1.0}}),
        2000,
        "ggd_nll_only",
        2,
    );
    let a = run_experiment(&biev).unwrap();
    let b = run_experiment(&only).unwrap();
    let loss =
        |log: &ggtde_core::TrainRunLog| log.checkpoints.iter().map(|c| c.loss).collect::<Vec<_>>();
    assert_eq!(loss(&a), loss(&b));
    assert_eq!(a.value_rmse_vs_oracle(), b.value_rmse_vs_oracle());
}

#[test]
fn frozen_targets_ignore_parameter_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = NetworkShape {
        feature_dim: 6,
        hidden_dim: 8,
        head_kind: HeadKind::Beta,
        softplus_epsilon: 0.05,
    };
    let mut ens = CriticEnsemble::new(5, shape, 1.0, &mut rng).unwrap();
    let table = TargetTable::snapshot(&ens).unwrap();
    let frozen = table.clone();
    let spec = LossSpec {
        kind: LossKind::GgdNllBiev,
        form: Default::default(),
        weighting: Default::default(),
    };
    let mut opt = Optimizer::new(OptimizerKind::Adam, &ens);
    for step in 0..20 {
        let inputs = StepInputs {
            inputs: (0..32).map(|i| i % 6).collect(),
            targets: table
                .values
                .iter()
                .map(|v| (0..32).map(|i| 1.0 + 0.9 * v[(i + 1) % 6]).collect())
                .collect(),
            value_variance: vec![0.1; 32],
        };
        train_step(&mut ens, &inputs, &spec, &mut opt, 1e-2, step).unwrap();
    }
    assert_eq!(table, frozen);
    assert_ne!(
        TargetTable::snapshot(&ens).unwrap().fingerprint(),
        table.fingerprint()
    );
}

#[test]
fn five_state_gaussian_chain_is_learned() {
    for kind in ["mse", "ggd_nll_biev"] {
        let log = run_experiment(&chain(
            5,
            json!({"gaussian": {"sigma": 0.1}}),
            50_000,
            kind,
            0,
        ))
        .unwrap();
        let rmse = log.final_checkpoint().value_rmse;
        assert!(rmse <= 0.1, "{kind}: final value RMSE {rmse}");
    }
}

#[test]
fn fitted_shape_tracks_reward_noise() {
    for seed in [0, 1] {
        let fit = |noise| {
            let log = run_experiment(&chain(10, noise, 20_000, "ggd_nll_biev", seed)).unwrap();
            log.final_checkpoint().fitted_beta.expect("fit succeeds")
        };
        let gaussian = fit(json!({"gaussian": {"sigma": 2.0}}));
        let laplace = fit(json!({"laplace": {"scale": 2.0}}));
        assert!((1.4..=3.0).contains(&gaussian), "seed {seed}: {gaussian}");
        assert!(
            laplace < gaussian,
            "seed {seed}: laplace {laplace} vs gaussian {gaussian}"
        );
    }
}
