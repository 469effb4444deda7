//! Per-sample loss weights and the composite objective
//! `L = Σ ω̃ᴿᴬ·NLL(δ; α, β) + λ·Σ ω̃ᴮᴵᴱⱽ·ρ(δ)`, where ω̃ denotes weights
//! normalised within the batch.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimators::mbbe_shrink_estimated;
use crate::ggd::{nll_grad, nll_with, GgdParams, NllForm};

/// Lower bound on ξ; keeps weights finite when every variance is zero.
pub const XI_FLOOR: f64 = 1e-8;
/// Slack allowed on the effective-batch-size target.
pub const ESS_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum XiMode {
    Fixed { value: f64 },
    Solve { min_effective_batch: usize },
}

impl Default for XiMode {
    fn default() -> Self {
        XiMode::Solve {
            min_effective_batch: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Biv,
    #[default]
    Biev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaMode {
    #[default]
    RiskAverse,
    RiskSeeking,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegLoss {
    #[default]
    Squared,
    Absolute,
}

impl RegLoss {
    pub fn value(self, delta: f64) -> f64 {
        match self {
            RegLoss::Squared => delta * delta,
            RegLoss::Absolute => delta.abs(),
        }
    }

    pub fn derivative(self, delta: f64) -> f64 {
        match self {
            RegLoss::Squared => 2.0 * delta,
            RegLoss::Absolute => {
                if delta == 0.0 {
                    0.0
                } else {
                    delta.signum()
                }
            }
        }
    }
}

/// Whether the ensemble error variance is MBBE-shrunk before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceCorrection {
    #[default]
    Mbbe,
    Raw,
}

fn default_lambda() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    0.99
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub xi_mode: XiMode,
    #[serde(default = "default_gamma")]
    pub discount_gamma: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub ra_mode: RaMode,
    #[serde(default)]
    pub reg_loss: RegLoss,
    #[serde(default)]
    pub variance_correction: VarianceCorrection,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            xi_mode: XiMode::default(),
            discount_gamma: default_gamma(),
            scheme: Scheme::default(),
            ra_mode: RaMode::default(),
            reg_loss: RegLoss::default(),
            variance_correction: VarianceCorrection::default(),
        }
    }
}

impl WeightingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.discount_gamma) {
            return Err(Error::Config(format!(
                "discount_gamma must lie in [0, 1], got {}",
                self.discount_gamma
            )));
        }
        match self.xi_mode {
            XiMode::Fixed { value } if !(value.is_finite() && value > 0.0) => Err(Error::Config(
                format!("fixed xi must be finite and > 0, got {value}"),
            )),
            XiMode::Solve {
                min_effective_batch: 0,
            } => Err(Error::Config("min_effective_batch must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// Per-step quantities needed to weight one minibatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdErrorBatch {
    pub deltas: Vec<f64>,
    /// V[Q^μ_t] across critics.
    pub ensemble_value_variance: Vec<f64>,
    /// Bessel-corrected V[δ_t] across critics.
    pub ensemble_error_variance: Vec<f64>,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Number of critics behind the ensemble variances.
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    /// Estimated excess kurtosis of δ_t across critics; zero when absent.
    #[serde(default)]
    pub error_kurtosis: Option<Vec<f64>>,
}

fn default_ensemble_size() -> usize {
    5
}

impl TdErrorBatch {
    /// Batch with unit scales, no kurtosis information and the default
    /// ensemble size.
    pub fn new(
        deltas: Vec<f64>,
        ensemble_value_variance: Vec<f64>,
        ensemble_error_variance: Vec<f64>,
        betas: Vec<f64>,
    ) -> Result<Self> {
        let alphas = vec![1.0; deltas.len()];
        let b = Self {
            deltas,
            ensemble_value_variance,
            ensemble_error_variance,
            betas,
            alphas,
            ensemble_size: default_ensemble_size(),
            error_kurtosis: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.deltas.len();
        if n == 0 {
            return domain("TD-error batch is empty");
        }
        let lens = [
            self.ensemble_value_variance.len(),
            self.ensemble_error_variance.len(),
            self.betas.len(),
            self.alphas.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return domain(format!(
                "TD-error batch fields have unequal lengths: {n} deltas vs {lens:?}"
            ));
        }
        if let Some(k) = &self.error_kurtosis {
            if k.len() != n || k.iter().any(|x| !x.is_finite()) {
                return domain("error_kurtosis must be finite and match the batch length");
            }
        }
        if self.ensemble_size < 2 {
            return domain(format!(
                "ensemble_size must be >= 2, got {}",
                self.ensemble_size
            ));
        }
        if self.deltas.iter().any(|d| !d.is_finite()) {
            return domain("TD errors must be finite");
        }
        let bad_var = |v: &[f64]| v.iter().any(|x| !x.is_finite() || *x < 0.0);
        if bad_var(&self.ensemble_value_variance) || bad_var(&self.ensemble_error_variance) {
            return domain("ensemble variances must be finite and >= 0");
        }
        let bad_pos = |v: &[f64]| v.iter().any(|x| !x.is_finite() || *x <= 0.0);
        if bad_pos(&self.betas) || bad_pos(&self.alphas) {
            return domain("shape and scale heads must be finite and > 0");
        }
        Ok(())
    }
}

/// Divides by the sum; the result sums to one within rounding.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return domain("cannot normalise an empty weight vector");
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return domain("weights must be finite and >= 0");
    }
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        return domain("weights sum to zero");
    }
    Ok(weights.iter().map(|w| w / s).collect())
}

/// (Σω)²/Σω².
pub fn effective_batch_size(weights: &[f64]) -> f64 {
    // Scale first so that tiny or huge weights do not under/overflow.
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), w| {
        let u = w / max;
        (s + u, s2 + u * u)
    });
    s * s / s2
}

fn ess_at(variances: &[f64], xi: f64) -> f64 {
    // The largest weight belongs to the smallest variance.
    let vmin = variances.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let (s, s2) = variances.iter().fold((0.0, 0.0), |(s, s2), v| {
        let u = (vmin + xi) / (v + xi);
        (s + u, s2 + u * u)
    });
    s * s / s2
}

/// Smallest ξ (to bisection precision) with ESS(ξ) ≥ `min_effective_batch`
/// for weights 1/(v + ξ).
pub fn solve_xi(variances: &[f64], min_effective_batch: usize) -> Result<f64> {
    let n = variances.len();
    if n == 0 {
        return domain("cannot solve xi for an empty batch");
    }
    if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return domain("variances must be finite and >= 0");
    }
    if min_effective_batch == 0 || min_effective_batch > n {
        return domain(format!(
            "effective batch target {min_effective_batch} is unreachable with {n} samples"
        ));
    }
    let target = min_effective_batch as f64 - ESS_TOLERANCE;
    if ess_at(variances, XI_FLOOR) >= target {
        return Ok(XI_FLOOR);
    }
    let vmax = variances.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut lo = XI_FLOOR;
    let mut hi = 10.0 * vmax + 1.0;
    let mut expansions = 0;
    while ess_at(variances, hi) < target {
        lo = hi;
        hi *= 10.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Convergence {
                what: "xi bracket expansion",
                achieved: ess_at(variances, hi),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ess_at(variances, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

fn resolve_xi(effective_variances: &[f64], cfg: &WeightingConfig) -> Result<f64> {
    match cfg.xi_mode {
        XiMode::Fixed { value } => Ok(value),
        XiMode::Solve {
            min_effective_batch,
        } => solve_xi(effective_variances, min_effective_batch),
    }
}

/// γ²·V[Q^μ_t], the variance inverted by BIV.
pub fn biv_variances(batch: &TdErrorBatch, cfg: &WeightingConfig) -> Vec<f64> {
    let g2 = cfg.discount_gamma * cfg.discount_gamma;
    batch
        .ensemble_value_variance
        .iter()
        .map(|v| g2 * v)
        .collect()
}

/// V[δ_t], MBBE-shrunk per step when the config asks for it.
pub fn biev_variances(batch: &TdErrorBatch, correction: VarianceCorrection) -> Result<Vec<f64>> {
    match correction {
        VarianceCorrection::Raw => Ok(batch.ensemble_error_variance.clone()),
        VarianceCorrection::Mbbe => batch
            .ensemble_error_variance
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let kappa = batch.error_kurtosis.as_ref().map_or(0.0, |k| k[t]);
                Ok(mbbe_shrink_estimated(batch.ensemble_size, kappa)? * v)
            })
            .collect(),
    }
}

/// Inverse-variance weights with ξ resolved on the same variances.
pub struct InverseVarianceWeights {
    pub weights: Vec<f64>,
    pub xi: f64,
}

fn inverse_variance(variances: &[f64], cfg: &WeightingConfig) -> Result<InverseVarianceWeights> {
    let xi = resolve_xi(variances, cfg)?;
    Ok(InverseVarianceWeights {
        weights: variances.iter().map(|v| 1.0 / (v + xi)).collect(),
        xi,
    })
}

/// ω_t = 1/(γ²V[Q^μ_t] + ξ), unnormalised.
pub fn biv_weights(batch: &TdErrorBatch, cfg: &WeightingConfig) -> Result<Vec<f64>> {
    biv_weights_with_xi(batch, cfg).map(|w| w.weights)
}

pub fn biv_weights_with_xi(
    batch: &TdErrorBatch,
    cfg: &WeightingConfig,
) -> Result<InverseVarianceWeights> {
    batch.validate()?;
    cfg.validate()?;
    inverse_variance(&biv_variances(batch, cfg), cfg)
}

/// ω_t = 1/(V[δ_t] + ξ), unnormalised.
pub fn biev_weights(batch: &TdErrorBatch, cfg: &WeightingConfig) -> Result<Vec<f64>> {
    biev_weights_with_xi(batch, cfg).map(|w| w.weights)
}

pub fn biev_weights_with_xi(
    batch: &TdErrorBatch,
    cfg: &WeightingConfig,
) -> Result<InverseVarianceWeights> {
    batch.validate()?;
    cfg.validate()?;
    inverse_variance(&biev_variances(batch, cfg.variance_correction)?, cfg)
}

/// β_t, 1/β_t or 1, unnormalised.
pub fn ra_weights(batch: &TdErrorBatch, mode: RaMode) -> Result<Vec<f64>> {
    batch.validate()?;
    Ok(ra_weights_from_betas(&batch.betas, mode))
}

fn ra_weights_from_betas(betas: &[f64], mode: RaMode) -> Vec<f64> {
    match mode {
        RaMode::RiskAverse => betas.to_vec(),
        RaMode::RiskSeeking => betas.iter().map(|b| 1.0 / b).collect(),
        RaMode::None => vec![1.0; betas.len()],
    }
}

/// Normalised weights for both loss terms, held fixed while differentiating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenWeights {
    pub ra: Vec<f64>,
    pub reg: Vec<f64>,
    pub xi: f64,
}

impl FrozenWeights {
    pub fn compute(batch: &TdErrorBatch, cfg: &WeightingConfig) -> Result<Self> {
        let ra = normalize(&ra_weights(batch, cfg.ra_mode)?)?;
        let reg = match cfg.scheme {
            Scheme::Biev => biev_weights_with_xi(batch, cfg)?,
            Scheme::Biv => biv_weights_with_xi(batch, cfg)?,
        };
        Ok(Self {
            ra,
            reg: normalize(&reg.weights)?,
            xi: reg.xi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeLoss {
    pub total: f64,
    pub attenuation: f64,
    pub regularization: f64,
    /// Normalised risk-aware weights.
    pub ra_weights: Vec<f64>,
    /// Normalised BIEV (or BIV) weights.
    pub reg_weights: Vec<f64>,
    pub xi: f64,
}

pub fn composite_loss(
    batch: &TdErrorBatch,
    cfg: &WeightingConfig,
    form: NllForm,
) -> Result<CompositeLoss> {
    let w = FrozenWeights::compute(batch, cfg)?;
    let (attenuation, regularization) = loss_terms(batch, &w, cfg.reg_loss, form)?;
    Ok(CompositeLoss {
        total: attenuation + cfg.lambda * regularization,
        attenuation,
        regularization,
        ra_weights: w.ra,
        reg_weights: w.reg,
        xi: w.xi,
    })
}

fn loss_terms(
    batch: &TdErrorBatch,
    w: &FrozenWeights,
    reg: RegLoss,
    form: NllForm,
) -> Result<(f64, f64)> {
    let mut attenuation = 0.0;
    let mut regularization = 0.0;
    for t in 0..batch.len() {
        let p = GgdParams {
            mu: 0.0,
            alpha: batch.alphas[t],
            beta: batch.betas[t],
        };
        attenuation += w.ra[t] * nll_with(batch.deltas[t], &p, form)?;
        regularization += w.reg[t] * reg.value(batch.deltas[t]);
    }
    Ok((attenuation, regularization))
}

/// Per-sample partial derivatives of the composite total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrad {
    pub d_delta: f64,
    pub d_beta: f64,
    pub d_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGrad {
    pub total: f64,
    pub attenuation: f64,
    pub regularization: f64,
    pub grads: Vec<SampleGrad>,
    /// Samples whose δ-derivative is singular.
    pub singular: usize,
}

/// Value and gradient of the composite objective with the weights held fixed.
pub fn composite_loss_grad(
    batch: &TdErrorBatch,
    weights: &FrozenWeights,
    lambda: f64,
    reg: RegLoss,
    form: NllForm,
) -> Result<CompositeGrad> {
    batch.validate()?;
    if weights.ra.len() != batch.len() || weights.reg.len() != batch.len() {
        return domain("frozen weights do not match the batch length");
    }
    let (att, regv) = loss_terms(batch, weights, reg, form)?;
    let mut singular = 0;
    let mut grads = Vec::with_capacity(batch.len());
    for t in 0..batch.len() {
        let p = GgdParams {
            mu: 0.0,
            alpha: batch.alphas[t],
            beta: batch.betas[t],
        };
        let g = nll_grad(batch.deltas[t], &p, form)?;
        singular += usize::from(g.singular);
        let wa = weights.ra[t];
        grads.push(SampleGrad {
            d_delta: wa * g.d_delta + lambda * weights.reg[t] * reg.derivative(batch.deltas[t]),
            d_beta: wa * g.d_beta,
            d_alpha: wa * g.d_alpha,
        });
    }
    Ok(CompositeGrad {
        total: att + lambda * regv,
        attenuation: att,
        regularization: regv,
        grads,
        singular,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianBaselineLoss {
    pub total: f64,
    /// Σ[(δ/σ)² + ln σ²].
    pub nll_sum: f64,
    /// Σ ω̃ᴮᴵⱽ δ².
    pub regularization: f64,
    pub xi: f64,
}

/// Σ_t[(δ_t/σ_t)² + ln σ_t²] + λ·Σ_t ω̃ᴮᴵⱽ_t δ_t².
pub fn gaussian_baseline_loss(
    batch: &TdErrorBatch,
    cfg: &WeightingConfig,
    sigma_heads: &[f64],
) -> Result<GaussianBaselineLoss> {
    if sigma_heads.len() != batch.len() {
        return domain("sigma_heads must match the batch length");
    }
    if sigma_heads.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return domain("sigma heads must be finite and > 0");
    }
    let biv = biv_weights_with_xi(batch, cfg)?;
    let w = normalize(&biv.weights)?;
    let mut nll_sum = 0.0;
    let mut regularization = 0.0;
    for ((d, s), w) in batch.deltas.iter().zip(sigma_heads).zip(&w) {
        nll_sum += (d / s).powi(2) + (s * s).ln();
        regularization += w * d * d;
    }
    Ok(GaussianBaselineLoss {
        total: nll_sum + cfg.lambda * regularization,
        nll_sum,
        regularization,
        xi: biv.xi,
    })
}
