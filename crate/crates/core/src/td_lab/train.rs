//! Losses, gradients and parameter updates for the critic ensemble.
//!
//! Targets come from a frozen copy of the ensemble. Per-sample weights
//! (risk-aware, BIEV, BIV) are computed once per minibatch from the current
//! parameters and then held fixed while differentiating.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::network::{CriticEnsemble, ForwardCache, HeadKind, Input};
use crate::error::{domain, Error, Result};
use crate::estimators::{effective_kurtosis, KurtosisSource};
use crate::ggd::NllForm;
use crate::weighting::{
    biv_weights_with_xi, composite_loss_grad, normalize, ra_weights, FrozenWeights, TdErrorBatch,
    WeightingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean squared TD error.
    Mse,
    /// Gaussian NLL with a σ head plus BIV-weighted squared error.
    GaussianNllBiv,
    /// Risk-aware GGD NLL plus BIEV-weighted regulariser.
    GgdNllBiev,
    /// Risk-aware GGD NLL alone.
    GgdNllOnly,
}

impl LossKind {
    pub fn head_kind(self, alpha_head: bool) -> HeadKind {
        match self {
            LossKind::Mse => HeadKind::None,
            LossKind::GaussianNllBiv => HeadKind::Variance,
            LossKind::GgdNllBiev | LossKind::GgdNllOnly if alpha_head => HeadKind::AlphaBeta,
            LossKind::GgdNllBiev | LossKind::GgdNllOnly => HeadKind::Beta,
        }
    }
}

/// Everything that determines the per-step objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub form: NllForm,
    pub weighting: WeightingConfig,
}

impl LossSpec {
    fn lambda(&self) -> f64 {
        match self.kind {
            LossKind::GgdNllOnly => 0.0,
            _ => self.weighting.lambda,
        }
    }

    fn check_heads(&self, ens: &CriticEnsemble) -> Result<()> {
        let head = ens.head_kind();
        let ok = match self.kind {
            LossKind::Mse => true,
            LossKind::GaussianNllBiv => head == HeadKind::Variance,
            LossKind::GgdNllBiev | LossKind::GgdNllOnly => {
                matches!(head, HeadKind::Beta | HeadKind::AlphaBeta)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss {:?} cannot use {head:?} heads",
                self.kind
            )))
        }
    }
}

/// TD(0) target r + γ·next_value.
pub fn td_target(reward: f64, next_value: f64, discount: f64) -> f64 {
    reward + discount * next_value
}

/// δ = target − predicted.
pub fn td_error(target: f64, predicted: f64) -> f64 {
    target - predicted
}

/// Elementwise [`td_error`].
pub fn td_errors(targets: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    if targets.len() != predicted.len() {
        return domain("targets and predictions differ in length");
    }
    Ok(targets
        .iter()
        .zip(predicted)
        .map(|(t, p)| td_error(*t, *p))
        .collect())
}

/// Minibatch with its frozen bootstrap targets.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    /// One-hot input index of each sample.
    pub inputs: Vec<usize>,
    /// `targets[k][t]` for critic k.
    pub targets: Vec<Vec<f64>>,
    /// Across-critic variance of the bootstrapped next value, per sample.
    pub value_variance: Vec<f64>,
}

impl StepInputs {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn validate(&self, n_critics: usize) -> Result<()> {
        let b = self.inputs.len();
        if b == 0 {
            return domain("empty minibatch");
        }
        if self.targets.len() != n_critics
            || self.targets.iter().any(|t| t.len() != b)
            || self.value_variance.len() != b
        {
            return domain("minibatch targets do not match the ensemble / batch shape");
        }
        Ok(())
    }
}

/// Weights frozen for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenStep {
    None,
    /// Normalised BIV weights shared by all critics, and ξ.
    Biv(Vec<f64>, f64),
    /// One set of risk-aware and BIEV weights per critic.
    Ggd(Vec<FrozenWeights>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossDiagnostics {
    /// Sum over critics of each critic's objective.
    pub total: f64,
    pub attenuation: f64,
    pub regularization: f64,
    /// Mean ξ over critics, 0 when unused.
    pub xi: f64,
    pub mean_abs_delta: f64,
    /// Samples where the exact NLL's δ-derivative was singular.
    pub singular: usize,
}

/// Hidden activations and raw outputs of every critic on every sample.
struct Forwarded {
    hidden_dim: usize,
    n_out: usize,
    batch: usize,
    hidden: Vec<f64>,
    out: Vec<f64>,
    deltas: Vec<Vec<f64>>,
}

impl Forwarded {
    fn hidden(&self, k: usize, t: usize) -> &[f64] {
        let at = (k * self.batch + t) * self.hidden_dim;
        &self.hidden[at..at + self.hidden_dim]
    }

    fn out(&self, k: usize, t: usize) -> &[f64] {
        let at = (k * self.batch + t) * self.n_out;
        &self.out[at..at + self.n_out]
    }
}

fn forward_all(ens: &CriticEnsemble, inputs: &StepInputs) -> Result<Forwarded> {
    let k_n = ens.n_critics();
    let b = inputs.len();
    let (hd, n_out) = (ens.shape.hidden_dim, 1 + ens.head_kind().n_heads());
    if let Some(&i) = inputs.inputs.iter().find(|&&i| i >= ens.shape.feature_dim) {
        return domain(format!(
            "one-hot index {i} >= input width {}",
            ens.shape.feature_dim
        ));
    }
    let mut hidden = vec![0.0; k_n * b * hd];
    let mut out = vec![0.0; k_n * b * n_out];
    let mut deltas = Vec::with_capacity(k_n);
    for (k, critic) in ens.critics.iter().enumerate() {
        let mut dk = Vec::with_capacity(b);
        for (t, &i) in inputs.inputs.iter().enumerate() {
            let (hs, os) = ((k * b + t) * hd, (k * b + t) * n_out);
            let o = &mut out[os..os + n_out];
            critic.forward_into(Input::OneHot(i), &mut hidden[hs..hs + hd], o);
            dk.push(td_error(inputs.targets[k][t], o[0]));
        }
        deltas.push(dk);
    }
    Ok(Forwarded {
        hidden_dim: hd,
        n_out,
        batch: b,
        hidden,
        out,
        deltas,
    })
}

fn sample_variance_across(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// Per-critic TD-error batches for the weighting module.
fn ggd_batches(
    ens: &CriticEnsemble,
    inputs: &StepInputs,
    fw: &Forwarded,
) -> Result<Vec<TdErrorBatch>> {
    let k_n = ens.n_critics();
    let b = inputs.len();
    let mut error_variance = Vec::with_capacity(b);
    let mut error_kurtosis = Vec::with_capacity(b);
    let mut column = vec![0.0; k_n];
    for t in 0..b {
        for k in 0..k_n {
            column[k] = fw.deltas[k][t];
        }
        error_variance.push(sample_variance_across(&column));
        error_kurtosis.push(effective_kurtosis(&column, KurtosisSource::Estimated)?);
    }
    let alpha_head = ens.head_kind() == HeadKind::AlphaBeta;
    (0..k_n)
        .map(|k| {
            let mut betas = Vec::with_capacity(b);
            let mut alphas = Vec::with_capacity(b);
            for t in 0..b {
                let raw = fw.out(k, t);
                if alpha_head {
                    alphas.push(ens.head(raw, 0).0);
                    betas.push(ens.head(raw, 1).0);
                } else {
                    alphas.push(1.0);
                    betas.push(ens.head(raw, 0).0);
                }
            }
            let batch = TdErrorBatch {
                deltas: fw.deltas[k].clone(),
                ensemble_value_variance: inputs.value_variance.clone(),
                ensemble_error_variance: error_variance.clone(),
                betas,
                alphas,
                ensemble_size: k_n,
                error_kurtosis: Some(error_kurtosis.clone()),
            };
            batch.validate()?;
            Ok(batch)
        })
        .collect()
}

/// Computes the weights that stay constant during differentiation.
pub fn freeze(ens: &CriticEnsemble, inputs: &StepInputs, spec: &LossSpec) -> Result<FrozenStep> {
    inputs.validate(ens.n_critics())?;
    spec.check_heads(ens)?;
    match spec.kind {
        LossKind::GgdNllBiev | LossKind::GgdNllOnly => {
            let fw = forward_all(ens, inputs)?;
            let batches = ggd_batches(ens, inputs, &fw)?;
            freeze_from(inputs, spec, Some(&batches))
        }
        _ => freeze_from(inputs, spec, None),
    }
}

fn freeze_from(
    inputs: &StepInputs,
    spec: &LossSpec,
    batches: Option<&[TdErrorBatch]>,
) -> Result<FrozenStep> {
    match (spec.kind, batches) {
        (LossKind::Mse, _) => Ok(FrozenStep::None),
        (LossKind::GaussianNllBiv, _) => {
            let b = inputs.len();
            let batch = TdErrorBatch::new(
                vec![0.0; b],
                inputs.value_variance.clone(),
                vec![0.0; b],
                vec![1.0; b],
            )?;
            let w = biv_weights_with_xi(&batch, &spec.weighting)?;
            Ok(FrozenStep::Biv(normalize(&w.weights)?, w.xi))
        }
        (LossKind::GgdNllBiev | LossKind::GgdNllOnly, Some(batches)) => {
            // The regulariser weights depend only on across-critic statistics,
            // which every critic shares.
            let first = FrozenWeights::compute(&batches[0], &spec.weighting)?;
            let mut weights = Vec::with_capacity(batches.len());
            for b in &batches[1..] {
                weights.push(FrozenWeights {
                    ra: normalize(&ra_weights(b, spec.weighting.ra_mode)?)?,
                    reg: first.reg.clone(),
                    xi: first.xi,
                });
            }
            weights.insert(0, first);
            Ok(FrozenStep::Ggd(weights))
        }
        _ => unreachable!("GGD losses always build batches"),
    }
}

/// Loss value and (optionally) per-critic parameter gradients with the
/// given frozen weights.
pub fn loss_and_grad(
    ens: &CriticEnsemble,
    inputs: &StepInputs,
    frozen: &FrozenStep,
    spec: &LossSpec,
    want_grad: bool,
) -> Result<(LossDiagnostics, Vec<Vec<f64>>)> {
    inputs.validate(ens.n_critics())?;
    spec.check_heads(ens)?;
    let fw = forward_all(ens, inputs)?;
    let batches = match frozen {
        FrozenStep::Ggd(_) => Some(ggd_batches(ens, inputs, &fw)?),
        _ => None,
    };
    loss_and_grad_from(
        ens,
        inputs,
        frozen,
        spec,
        &fw,
        batches.as_deref(),
        want_grad,
    )
}

fn loss_and_grad_from(
    ens: &CriticEnsemble,
    inputs: &StepInputs,
    frozen: &FrozenStep,
    spec: &LossSpec,
    fw: &Forwarded,
    batches: Option<&[TdErrorBatch]>,
    want_grad: bool,
) -> Result<(LossDiagnostics, Vec<Vec<f64>>)> {
    let k_n = ens.n_critics();
    let b = inputs.len();
    let bf = b as f64;
    let mut grads: Vec<Vec<f64>> = if want_grad {
        ens.critics
            .iter()
            .map(|c| vec![0.0; c.n_params()])
            .collect()
    } else {
        Vec::new()
    };
    let mut diag = LossDiagnostics::default();
    let mut d_out = vec![0.0; fw.n_out];
    let lambda = spec.lambda();

    for k in 0..k_n {
        let deltas = &fw.deltas[k];
        let critic = &ens.critics[k];
        diag.mean_abs_delta += deltas.iter().map(|d| d.abs()).sum::<f64>() / (bf * k_n as f64);
        match (spec.kind, frozen) {
            (LossKind::Mse, _) => {
                let l = deltas.iter().map(|d| d * d).sum::<f64>() / bf;
                diag.attenuation += l;
                diag.total += l;
                if want_grad {
                    for t in 0..b {
                        d_out.fill(0.0);
                        d_out[0] = -2.0 * deltas[t] / bf;
                        critic.backward_from(
                            Input::OneHot(inputs.inputs[t]),
                            fw.hidden(k, t),
                            &d_out,
                            &mut grads[k],
                        );
                    }
                }
            }
            (LossKind::GaussianNllBiv, FrozenStep::Biv(w, xi)) => {
                let (mut nll, mut reg) = (0.0, 0.0);
                for t in 0..b {
                    let (s, slope) = ens.head(fw.out(k, t), 0);
                    let d = deltas[t];
                    nll += ((d / s).powi(2) + 2.0 * s.ln()) / bf;
                    reg += w[t] * d * d;
                    if want_grad {
                        let dl_dd = 2.0 * d / (bf * s * s) + 2.0 * lambda * w[t] * d;
                        let dl_ds = (-2.0 * d * d / (s * s * s) + 2.0 / s) / bf;
                        d_out[0] = -dl_dd;
                        d_out[1] = dl_ds * slope;
                        critic.backward_from(
                            Input::OneHot(inputs.inputs[t]),
                            fw.hidden(k, t),
                            &d_out,
                            &mut grads[k],
                        );
                    }
                }
                diag.attenuation += nll;
                diag.regularization += reg;
                diag.total += nll + lambda * reg;
                diag.xi += xi / k_n as f64;
            }
            (LossKind::GgdNllBiev | LossKind::GgdNllOnly, FrozenStep::Ggd(weights)) => {
                let batch = &batches.expect("GGD losses always build batches")[k];
                let w = &weights[k];
                let cg = composite_loss_grad(batch, w, lambda, spec.weighting.reg_loss, spec.form)?;
                diag.attenuation += cg.attenuation;
                diag.regularization += cg.regularization;
                diag.total += cg.total;
                diag.singular += cg.singular;
                diag.xi += w.xi / k_n as f64;
                if want_grad {
                    for (t, g) in cg.grads.iter().enumerate() {
                        let raw = fw.out(k, t);
                        d_out[0] = -g.d_delta;
                        match ens.head_kind() {
                            HeadKind::AlphaBeta => {
                                d_out[1] = g.d_alpha * ens.head(raw, 0).1;
                                d_out[2] = g.d_beta * ens.head(raw, 1).1;
                            }
                            _ => d_out[1] = g.d_beta * ens.head(raw, 0).1,
                        }
                        critic.backward_from(
                            Input::OneHot(inputs.inputs[t]),
                            fw.hidden(k, t),
                            &d_out,
                            &mut grads[k],
                        );
                    }
                }
            }
            _ => {
                return Err(Error::Config(
                    "frozen weights do not match the loss kind".into(),
                ))
            }
        }
    }
    Ok((diag, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Plain SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8), one state per critic.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, ens: &CriticEnsemble) -> Self {
        let zeros: Vec<Vec<f64>> = ens
            .critics
            .iter()
            .map(|c| vec![0.0; c.n_params()])
            .collect();
        Self {
            kind,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, ens: &mut CriticEnsemble, grads: &[Vec<f64>], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (c, g) in ens.critics.iter_mut().zip(grads) {
                    for (p, g) in c.params.iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t = self.t.saturating_add(1);
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (k, (c, g)) in ens.critics.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..c.params.len() {
                        m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                        v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                        c.params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// One optimisation step. Non-finite losses or gradients abort before any
/// parameter changes and name the offending term.
pub fn train_step(
    ens: &mut CriticEnsemble,
    inputs: &StepInputs,
    spec: &LossSpec,
    optimizer: &mut Optimizer,
    lr: f64,
    step: usize,
) -> Result<LossDiagnostics> {
    inputs.validate(ens.n_critics())?;
    spec.check_heads(ens)?;
    let fw = forward_all(ens, inputs)?;
    let batches = match spec.kind {
        LossKind::GgdNllBiev | LossKind::GgdNllOnly => Some(ggd_batches(ens, inputs, &fw)?),
        _ => None,
    };
    let frozen = freeze_from(inputs, spec, batches.as_deref())?;
    let (diag, grads) =
        loss_and_grad_from(ens, inputs, &frozen, spec, &fw, batches.as_deref(), true)?;
    let diverged = |term: &str| {
        Err(Error::Diverged {
            step,
            term: term.into(),
        })
    };
    if !diag.attenuation.is_finite() {
        return diverged("attenuation");
    }
    if !diag.regularization.is_finite() {
        return diverged("regularization");
    }
    if !diag.total.is_finite() {
        return diverged("total");
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return diverged("gradient");
    }
    optimizer.step(ens, &grads, lr);
    Ok(diag)
}

/// Frozen copy of the ensemble's value outputs over every input index.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    /// `values[k][i]` for critic k and one-hot input i.
    pub values: Vec<Vec<f64>>,
    fingerprint: u64,
}

impl TargetTable {
    pub fn snapshot(ens: &CriticEnsemble) -> Result<Self> {
        let mut cache = ForwardCache::default();
        let mut values = Vec::with_capacity(ens.n_critics());
        let mut h = DefaultHasher::new();
        for c in &ens.critics {
            for p in &c.params {
                p.to_bits().hash(&mut h);
            }
            let mut row = Vec::with_capacity(c.in_dim);
            for i in 0..c.in_dim {
                c.forward(Input::OneHot(i), &mut cache)?;
                row.push(cache.out[0]);
            }
            values.push(row);
        }
        Ok(Self {
            values,
            fingerprint: h.finish(),
        })
    }

    /// Hash of the parameters the table was built from.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.values.iter().map(|v| v[i]).sum::<f64>() / self.values.len() as f64
    }
}

/// Across-critic sample variance, exposed for the experiment loop.
pub(crate) fn across_variance(xs: &[f64]) -> f64 {
    sample_variance_across(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td_lab::network::NetworkShape;
    use crate::weighting::XiMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ensemble(kind: HeadKind, seed: u64) -> CriticEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = NetworkShape {
            feature_dim: 6,
            hidden_dim: 8,
            head_kind: kind,
            softplus_epsilon: 0.05,
        };
        CriticEnsemble::new(5, shape, 1.0, &mut rng).unwrap()
    }

    fn inputs(seed: u64, b: usize) -> StepInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StepInputs {
            inputs: (0..b).map(|_| rng.random_range(0..6)).collect(),
            targets: (0..5)
                .map(|_| (0..b).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
            value_variance: (0..b).map(|_| rng.random_range(0.0..0.5)).collect(),
        }
    }

    fn spec(kind: LossKind, form: NllForm) -> LossSpec {
        LossSpec {
            kind,
            form,
            weighting: WeightingConfig {
                xi_mode: XiMode::Solve {
                    min_effective_batch: 8,
                },
                ..WeightingConfig::default()
            },
        }
    }

    #[test]
    fn td_scalars() {
        assert_eq!(td_target(1.0, 0.0, 0.9), 1.0);
        assert_eq!(td_target(0.0, 10.0, 0.5), 5.0);
        assert!((td_target(-1.0, 2.0, 0.99) - 0.98).abs() < 1e-15);
        assert_eq!(td_error(5.0, 5.0), 0.0);
        assert_eq!(td_error(1.0, 0.25), 0.75);
        let t = [1.0, 2.0, -3.0];
        let p = [0.5, 2.5, 1.0];
        let batch = td_errors(&t, &p).unwrap();
        for i in 0..3 {
            assert_eq!(batch[i], td_error(t[i], p[i]));
        }
        assert!(td_errors(&t, &p[..2]).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        for (kind, head) in [
            (LossKind::Mse, HeadKind::None),
            (LossKind::GaussianNllBiv, HeadKind::Variance),
            (LossKind::GgdNllBiev, HeadKind::Beta),
        ] {
            let mut e = ensemble(head, 1);
            let before = e.clone();
            let mut opt = Optimizer::new(OptimizerKind::Adam, &e);
            let d = train_step(
                &mut e,
                &inputs(2, 24),
                &spec(kind, NllForm::Modified),
                &mut opt,
                0.0,
                0,
            )
            .unwrap();
            assert!(d.total.is_finite());
            assert_eq!(e, before);
        }
    }

    #[test]
    fn mismatched_heads_are_rejected() {
        let e = ensemble(HeadKind::None, 1);
        assert!(freeze(
            &e,
            &inputs(2, 24),
            &spec(LossKind::GgdNllBiev, NllForm::Exact)
        )
        .is_err());
    }

    #[test]
    fn single_transition_contracts_to_target() {
        let mut e = ensemble(HeadKind::None, 4);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, &e);
        let inp = StepInputs {
            inputs: vec![3],
            targets: vec![vec![1.5]; 5],
            value_variance: vec![0.0],
        };
        let s = spec(LossKind::Mse, NllForm::Modified);
        let worst = |e: &CriticEnsemble| {
            e.forward_input(Input::OneHot(3))
                .unwrap()
                .iter()
                .fold(0.0f64, |m, o| m.max((o.value - 1.5).abs()))
        };
        let mut steps = 0;
        while worst(&e) >= 1e-6 && steps < 10_000 {
            train_step(&mut e, &inp, &s, &mut opt, 0.05, steps).unwrap();
            steps += 1;
        }
        assert!(worst(&e) < 1e-6);
        assert!(steps < 10_000);
    }

    #[test]
    fn only_loss_equals_biev_at_zero_lambda() {
        let e = ensemble(HeadKind::Beta, 5);
        let inp = inputs(6, 32);
        let mut a = spec(LossKind::GgdNllBiev, NllForm::Modified);
        a.weighting.lambda = 0.0;
        let b = spec(LossKind::GgdNllOnly, NllForm::Modified);
        let fa = freeze(&e, &inp, &a).unwrap();
        let fb = freeze(&e, &inp, &b).unwrap();
        let (da, ga) = loss_and_grad(&e, &inp, &fa, &a, true).unwrap();
        let (db, gb) = loss_and_grad(&e, &inp, &fb, &b, true).unwrap();
        assert_eq!(da.total, db.total);
        assert_eq!(ga, gb);
    }

    #[test]
    fn target_fingerprint_tracks_parameters() {
        let mut e = ensemble(HeadKind::Beta, 7);
        let t0 = TargetTable::snapshot(&e).unwrap();
        assert_eq!(
            t0.fingerprint(),
            TargetTable::snapshot(&e).unwrap().fingerprint()
        );
        *e.param_mut(3) += 1e-9;
        assert_ne!(
            t0.fingerprint(),
            TargetTable::snapshot(&e).unwrap().fingerprint()
        );
    }
}
