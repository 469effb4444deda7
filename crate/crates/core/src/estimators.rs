//! Variance estimators: Bessel-corrected sample variance, the kurtosis-aware
//! minimum-MSE shrinkage estimator (MBBE), and Monte-Carlo harnesses for the
//! finite-sample behaviour of both.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ggd::{self, GgdParams, GgdSampler};

/// Shrink applied to plug-in kurtosis estimates: κ̂ ← κ̂·n/(n + KURTOSIS_SHRINK_OFFSET).
pub const KURTOSIS_SHRINK_OFFSET: f64 = 10.0;
/// Floor of the MBBE denominator when the kurtosis is estimated.
pub const MBBE_DENOMINATOR_FLOOR: f64 = 0.1;

/// Streaming mean / variance accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Bessel-corrected variance; `None` below two observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }

    pub fn population_variance(&self) -> Option<f64> {
        (self.n >= 1).then(|| self.m2 / self.n as f64)
    }
}

impl Extend<f64> for Welford {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return domain("samples must be finite");
    }
    Ok(())
}

/// Σ(xᵢ − x̄)²/(n − 1).
pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return domain(format!(
            "sample variance needs at least 2 samples, got {}",
            xs.len()
        ));
    }
    check_finite(xs)?;
    Ok(sum_sq_dev(xs) / (xs.len() - 1) as f64)
}

/// m₄/m₂² − 3 from central sample moments.
pub fn sample_excess_kurtosis(xs: &[f64]) -> Result<f64> {
    if xs.len() < 4 {
        return domain(format!(
            "sample kurtosis needs at least 4 samples, got {}",
            xs.len()
        ));
    }
    check_finite(xs)?;
    let m = mean(xs);
    let n = xs.len() as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d2 = (x - m) * (x - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return domain("sample kurtosis is undefined for zero-variance data");
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Where the excess kurtosis used by the MBBE comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KurtosisSource {
    /// A known population value; the shrink denominator is checked strictly.
    Known(f64),
    /// Plug-in sample kurtosis shrunk toward zero; the denominator is floored.
    Estimated,
}

/// ω*(n − 1) = (κ/n + (n+1)/(n−1))⁻¹, the factor multiplying s².
pub fn mbbe_shrink(n: usize, kappa: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("MBBE needs n >= 2, got {n}"));
    }
    if !kappa.is_finite() {
        return domain(format!("kurtosis must be finite, got {kappa}"));
    }
    let nf = n as f64;
    let denom = kappa / nf + (nf + 1.0) / (nf - 1.0);
    if denom <= 0.0 {
        return domain(format!(
            "MBBE shrink denominator {denom} is not positive (n = {n}, kappa = {kappa})"
        ));
    }
    Ok(1.0 / denom)
}

/// Kurtosis actually used by the MBBE for a given source.
pub fn effective_kurtosis(xs: &[f64], source: KurtosisSource) -> Result<f64> {
    match source {
        KurtosisSource::Known(k) => Ok(k),
        KurtosisSource::Estimated => {
            let n = xs.len();
            if n < 4 {
                return Ok(0.0);
            }
            match sample_excess_kurtosis(xs) {
                Ok(k) => Ok(k * n as f64 / (n as f64 + KURTOSIS_SHRINK_OFFSET)),
                // Constant data: kurtosis is irrelevant because s² = 0.
                Err(_) if sum_sq_dev(xs) == 0.0 => Ok(0.0),
                Err(e) => Err(e),
            }
        }
    }
}

/// Shrink factor from an estimated kurtosis, with the denominator floored.
pub fn mbbe_shrink_estimated(n: usize, kappa_hat: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("MBBE needs n >= 2, got {n}"));
    }
    let nf = n as f64;
    let denom = (kappa_hat / nf + (nf + 1.0) / (nf - 1.0)).max(MBBE_DENOMINATOR_FLOOR);
    Ok(1.0 / denom)
}

/// s²_{ω*} = (κ/n + (n+1)/(n−1))⁻¹ s².
pub fn mbbe_variance(xs: &[f64], source: KurtosisSource) -> Result<f64> {
    let s2 = sample_variance(xs)?;
    let kappa = effective_kurtosis(xs, source)?;
    let shrink = match source {
        KurtosisSource::Known(_) => mbbe_shrink(xs.len(), kappa)?,
        KurtosisSource::Estimated => mbbe_shrink_estimated(xs.len(), kappa)?,
    };
    Ok(shrink * s2)
}

/// RE_n = 1 + κ/n + 2/(n − 1) = MSE(s²)/MSE(s²_{ω*}).
pub fn relative_efficiency(n: usize, kappa: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("relative efficiency needs n >= 2, got {n}"));
    }
    let nf = n as f64;
    Ok(1.0 + kappa / nf + 2.0 / (nf - 1.0))
}

/// |√s² / x̄|.
pub fn coefficient_of_variation(xs: &[f64]) -> Result<f64> {
    let s2 = sample_variance(xs)?;
    let m = mean(xs);
    if m == 0.0 {
        return domain("coefficient of variation is undefined for zero mean");
    }
    Ok((s2.sqrt() / m).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub n: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub mbbe_variance: f64,
    /// The excess kurtosis fed to the MBBE and to RE_n.
    pub kurtosis_estimate: f64,
    pub relative_efficiency: f64,
    /// `None` when the sample mean is exactly zero.
    pub coefficient_of_variation: Option<f64>,
}

impl EstimatorReport {
    pub fn from_samples(xs: &[f64], source: KurtosisSource) -> Result<Self> {
        let sample_variance = sample_variance(xs)?;
        let kurtosis_estimate = effective_kurtosis(xs, source)?;
        Ok(Self {
            n: xs.len(),
            sample_mean: mean(xs),
            sample_variance,
            mbbe_variance: mbbe_variance(xs, source)?,
            kurtosis_estimate,
            relative_efficiency: relative_efficiency(xs.len(), kurtosis_estimate)?,
            coefficient_of_variation: coefficient_of_variation(xs).ok(),
        })
    }
}

/// Outcome of the standard-error distortion experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Outcome {
    /// Mean of σ̂²_MLE − σ² over trials.
    pub mean_bias_of_mle_variance: f64,
    /// The above with the kurtosis-free −σ²/n term removed.
    pub excess_bias: f64,
    /// Mean over trials of the normality-based standard error (2σ̂⁴/n)^{1/2}.
    pub normality_se: f64,
    /// Empirical standard deviation of σ̂²_MLE across trials.
    pub empirical_sd: f64,
    /// empirical_sd / normality_se.
    pub sd_to_se_ratio: f64,
    pub population_kurtosis: f64,
    pub sign_matches_kappa: bool,
}

/// Band around 1 for the SD/SE ratio in the Gaussian (κ = 0) case.
pub const NULL_RATIO_BAND: f64 = 0.05;

/// Compares the normality-based standard error of σ̂²_MLE against its
/// empirical spread. Heavy tails (κ > 0) make the normal-theory SE too small,
/// light tails (κ < 0) too large.
pub fn prop1_bias_experiment(
    dist: &GgdParams,
    n_per_trial: usize,
    trials: usize,
    seed: u64,
) -> Result<Prop1Outcome> {
    if n_per_trial < 4 {
        return domain(format!("n_per_trial must be >= 4, got {n_per_trial}"));
    }
    if trials < 1000 {
        return domain(format!("trials must be >= 1000, got {trials}"));
    }
    let sampler = GgdSampler::new(*dist)?;
    let true_var = ggd::variance(dist)?;
    let kappa = ggd::excess_kurtosis(dist.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_trial as f64;
    let mut buf = vec![0.0; n_per_trial];
    let mut est = Welford::new();
    let mut se = Welford::new();
    for _ in 0..trials {
        for x in buf.iter_mut() {
            *x = sampler.draw(&mut rng);
        }
        let v = sum_sq_dev(&buf) / n;
        est.push(v);
        se.push((2.0 * v * v / n).sqrt());
    }
    let empirical_sd = est.sample_variance().unwrap_or(0.0).sqrt();
    let normality_se = se.mean();
    let ratio = empirical_sd / normality_se;
    let mean_bias = est.mean() - true_var;
    let sign_matches_kappa = if kappa.abs() < 1e-9 {
        (ratio - 1.0).abs() <= NULL_RATIO_BAND
    } else if kappa > 0.0 {
        empirical_sd > normality_se
    } else {
        normality_se > empirical_sd
    };
    Ok(Prop1Outcome {
        mean_bias_of_mle_variance: mean_bias,
        excess_bias: mean_bias + true_var / n,
        normality_se,
        empirical_sd,
        sd_to_se_ratio: ratio,
        population_kurtosis: kappa,
        sign_matches_kappa,
    })
}

/// How the competing estimator scales Σ(xᵢ − x̄)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkChoice {
    /// ω* computed from the true population kurtosis.
    Optimal,
    /// A fixed ω; 1/(n − 1) reproduces s².
    Omega(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbbeOutcome {
    pub mse_sample_var: f64,
    pub mse_mbbe: f64,
    pub empirical_re: f64,
    /// RE_n evaluated at the true kurtosis.
    pub formula_re: f64,
}

pub fn mbbe_optimality_experiment(
    dist: &GgdParams,
    n_per_trial: usize,
    trials: usize,
    seed: u64,
    choice: ShrinkChoice,
) -> Result<MbbeOutcome> {
    if trials < 10_000 {
        return domain(format!("trials must be >= 10000, got {trials}"));
    }
    if n_per_trial < 2 {
        return domain(format!("n_per_trial must be >= 2, got {n_per_trial}"));
    }
    let sampler = GgdSampler::new(*dist)?;
    let true_var = ggd::variance(dist)?;
    let kappa = ggd::excess_kurtosis(dist.beta)?;
    let n = n_per_trial as f64;
    let omega = match choice {
        ShrinkChoice::Optimal => mbbe_shrink(n_per_trial, kappa)? / (n - 1.0),
        ShrinkChoice::Omega(w) if w.is_finite() && w > 0.0 => w,
        ShrinkChoice::Omega(w) => return domain(format!("omega must be finite and > 0, got {w}")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n_per_trial];
    let (mut se_s2, mut se_mbbe) = (Welford::new(), Welford::new());
    for _ in 0..trials {
        for x in buf.iter_mut() {
            *x = sampler.draw(&mut rng);
        }
        let ss = sum_sq_dev(&buf);
        let e1 = ss / (n - 1.0) - true_var;
        let e2 = omega * ss - true_var;
        se_s2.push(e1 * e1);
        se_mbbe.push(e2 * e2);
    }
    let (mse_sample_var, mse_mbbe) = (se_s2.mean(), se_mbbe.mean());
    Ok(MbbeOutcome {
        mse_sample_var,
        mse_mbbe,
        empirical_re: mse_sample_var / mse_mbbe,
        formula_re: relative_efficiency(n_per_trial, kappa)?,
    })
}
