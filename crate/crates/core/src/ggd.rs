//! The generalized Gaussian distribution GGD(μ, α, β) with density
//! `β / (2αΓ(1/β)) · exp(−(|x − μ|/α)^β)`.
//!
//! β = 2 is the Gaussian N(μ, α²/2), β = 1 the Laplace distribution and
//! β → ∞ approaches the uniform distribution on [μ − α, μ + α]. The negative
//! log-likelihood is only guaranteed to be well defined for β ∈ (0, 2]; larger
//! shapes are accepted and flagged through [`GgdParams::well_defined_nll`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quad::adaptive_simpson;
use crate::special::{digamma_unchecked, inc_gamma_pair, ln_gamma};

/// Shape box used by fitting and by network heads.
pub const BETA_MIN: f64 = 0.05;
pub const BETA_MAX: f64 = 10.0;
/// Scale box used by fitting and by network heads.
pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 1e3;

/// Absolute tolerance of the dominance quadrature.
pub const SSD_QUAD_TOL: f64 = 1e-9;
/// Gradient-norm tolerance that marks a fit as converged.
pub const FIT_GRAD_TOL: f64 = 1e-8;

const LN_2: f64 = std::f64::consts::LN_2;

/// Location / scale / shape triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GgdParams {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { mu, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    /// Zero-mean parameters, the form used for TD-error modeling.
    pub fn zero_mean(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(0.0, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return domain(format!("GGD location must be finite, got {}", self.mu));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return domain(format!(
                "GGD scale must be finite and > 0, got {}",
                self.alpha
            ));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return domain(format!(
                "GGD shape must be finite and > 0, got {}",
                self.beta
            ));
        }
        Ok(())
    }

    /// True iff β ∈ (0, 2], where the NLL is guaranteed to be well defined.
    pub fn well_defined_nll(&self) -> bool {
        self.beta > 0.0 && self.beta <= 2.0
    }
}

/// Which NLL to use: the exact GGD NLL or the multiplier form `(|δ|/α)·β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NllForm {
    Exact,
    #[default]
    Modified,
}

/// Partial derivatives of a per-sample NLL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllGrad {
    pub d_delta: f64,
    pub d_beta: f64,
    pub d_alpha: f64,
    /// Set when the exact form is evaluated at δ = 0 with β < 1, where the
    /// δ-derivative is unbounded; `d_delta` is then the zero subgradient.
    pub singular: bool,
}

pub fn log_pdf(x: f64, p: &GgdParams) -> Result<f64> {
    p.validate()?;
    let z = (x - p.mu).abs() / p.alpha;
    Ok(p.beta.ln() - LN_2 - p.alpha.ln() - ln_gamma(1.0 / p.beta) - z.powf(p.beta))
}

pub fn pdf(x: f64, p: &GgdParams) -> Result<f64> {
    log_pdf(x, p).map(f64::exp)
}

/// F(x) = 1/2 + sign(x − μ)·P(1/β, (|x − μ|/α)^β)/2.
pub fn cdf(x: f64, p: &GgdParams) -> Result<f64> {
    p.validate()?;
    cdf_unchecked(x, p)
}

fn cdf_unchecked(x: f64, p: &GgdParams) -> Result<f64> {
    if x == p.mu {
        return Ok(0.5);
    }
    let s = ((x - p.mu).abs() / p.alpha).powf(p.beta);
    let (_, q) = inc_gamma_pair(1.0 / p.beta, s)?;
    // Work with the upper tail Q so both tails keep full relative accuracy.
    Ok(if x > p.mu { 1.0 - 0.5 * q } else { 0.5 * q })
}

/// Draws from GGD(μ, α, β) via |X − μ| = α·G^{1/β}, G ~ Gamma(1/β, 1), with a
/// fair random sign.
#[derive(Debug, Clone)]
pub struct GgdSampler {
    params: GgdParams,
    gamma: Gamma<f64>,
}

impl GgdSampler {
    pub fn new(params: GgdParams) -> Result<Self> {
        params.validate()?;
        let gamma = match Gamma::new(1.0 / params.beta, 1.0) {
            Ok(g) => g,
            Err(e) => return domain(format!("cannot build gamma sampler: {e}")),
        };
        Ok(Self { params, gamma })
    }

    pub fn params(&self) -> &GgdParams {
        &self.params
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.gamma.sample(rng);
        let magnitude = self.params.alpha * g.powf(1.0 / self.params.beta);
        if rng.random::<bool>() {
            self.params.mu + magnitude
        } else {
            self.params.mu - magnitude
        }
    }
}

/// `n` seeded draws; identical seeds give identical sequences.
pub fn sample(p: &GgdParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    let sampler = GgdSampler::new(*p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// σ² = α²Γ(3/β)/Γ(1/β).
pub fn variance(p: &GgdParams) -> Result<f64> {
    p.validate()?;
    Ok(p.alpha * p.alpha * (ln_gamma(3.0 / p.beta) - ln_gamma(1.0 / p.beta)).exp())
}

/// Excess kurtosis Γ(5/β)Γ(1/β)/Γ(3/β)² − 3; depends on the shape only.
pub fn excess_kurtosis(beta: f64) -> Result<f64> {
    if !beta.is_finite() || beta <= 0.0 {
        return domain(format!(
            "excess kurtosis requires finite beta > 0, got {beta}"
        ));
    }
    let b = 1.0 / beta;
    Ok((ln_gamma(5.0 * b) + ln_gamma(b) - 2.0 * ln_gamma(3.0 * b)).exp() - 3.0)
}

/// Exact NLL `(|δ|/α)^β − ln(β/α) + ln Γ(1/β)`; equals `−ln pdf − ln 2`.
pub fn nll(delta: f64, p: &GgdParams) -> Result<f64> {
    p.validate()?;
    let z = delta.abs() / p.alpha;
    Ok(z.powf(p.beta) - (p.beta / p.alpha).ln() + ln_gamma(1.0 / p.beta))
}

/// Multiplier form `(|δ|/α)·β − ln(β/α) + ln Γ(1/β)`; coincides with [`nll`]
/// at β = 1.
pub fn nll_modified(delta: f64, p: &GgdParams) -> Result<f64> {
    p.validate()?;
    let z = delta.abs() / p.alpha;
    Ok(z * p.beta - (p.beta / p.alpha).ln() + ln_gamma(1.0 / p.beta))
}

pub fn nll_with(delta: f64, p: &GgdParams, form: NllForm) -> Result<f64> {
    match form {
        NllForm::Exact => nll(delta, p),
        NllForm::Modified => nll_modified(delta, p),
    }
}

pub fn nll_grad(delta: f64, p: &GgdParams, form: NllForm) -> Result<NllGrad> {
    p.validate()?;
    let (alpha, beta) = (p.alpha, p.beta);
    let z = delta.abs() / alpha;
    let sign = if delta > 0.0 {
        1.0
    } else if delta < 0.0 {
        -1.0
    } else {
        0.0
    };
    // d/dβ [−ln β + ln Γ(1/β)]
    let shape_terms = -1.0 / beta - digamma_unchecked(1.0 / beta) / (beta * beta);
    let grad = match form {
        NllForm::Exact => {
            let zb = z.powf(beta);
            let z_log_term = if z > 0.0 { zb * z.ln() } else { 0.0 };
            let singular = z == 0.0 && beta < 1.0;
            let d_delta = if z > 0.0 {
                sign * beta * z.powf(beta - 1.0) / alpha
            } else {
                0.0
            };
            NllGrad {
                d_delta,
                d_beta: z_log_term + shape_terms,
                d_alpha: (1.0 - beta * zb) / alpha,
                singular,
            }
        }
        NllForm::Modified => NllGrad {
            d_delta: sign * beta / alpha,
            d_beta: z + shape_terms,
            d_alpha: (1.0 - beta * z) / alpha,
            singular: false,
        },
    };
    Ok(grad)
}

/// Which parameters are estimated by [`fit_mle`]. μ is fixed at 0 in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// α fixed to 1, only β estimated.
    BetaOnly,
    /// α profiled out analytically, β searched.
    AlphaBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GgdParams,
    pub nll_at_optimum: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: FIT_GRAD_TOL,
        }
    }
}

/// Maximum-likelihood fit of a zero-mean GGD by minimising the mean exact NLL.
pub fn fit_mle(samples: &[f64], mode: FitMode) -> Result<FitResult> {
    fit_mle_with(samples, mode, &FitOptions::default())
}

pub fn fit_mle_with(samples: &[f64], mode: FitMode, opts: &FitOptions) -> Result<FitResult> {
    if samples.len() < 10 {
        return domain(format!(
            "fit needs at least 10 samples, got {}",
            samples.len()
        ));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return domain("fit samples must be finite");
    }
    if samples.iter().all(|&x| x == 0.0) {
        return domain("fit samples are all zero; the scale is degenerate");
    }
    let objective = FitObjective::new(samples, mode);

    // Coarse log-spaced scan, then golden-section inside the best bracket.
    const GRID: usize = 48;
    let (lo_ln, hi_ln) = (BETA_MIN.ln(), BETA_MAX.ln());
    let grid: Vec<f64> = (0..GRID)
        .map(|i| (lo_ln + (hi_ln - lo_ln) * i as f64 / (GRID - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&b| objective.value(b)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID - 1)];
    let mut iterations = GRID;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (objective.value(c), objective.value(d));
    while hi - lo > 1e-6 * hi && iterations < opts.max_iterations {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = objective.value(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = objective.value(d);
        }
        iterations += 1;
    }

    // Function values stop resolving the minimum near sqrt(eps); finish by
    // bisecting the analytic derivative across a widened bracket.
    let mut beta = 0.5 * (lo + hi);
    let mut a = (lo * 0.999).max(BETA_MIN);
    let mut b = (hi * 1.001).min(BETA_MAX);
    let (mut ga, gb) = (objective.slope(a), objective.slope(b));
    if ga < 0.0 && gb > 0.0 {
        while iterations < opts.max_iterations {
            let m = 0.5 * (a + b);
            let gm = objective.slope(m);
            iterations += 1;
            if gm == 0.0 || (b - a) <= 4.0 * f64::EPSILON * m {
                beta = m;
                break;
            }
            if (gm < 0.0) == (ga < 0.0) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
            beta = 0.5 * (a + b);
        }
    }

    let params = objective.params_at(beta);
    let nll_at_optimum = objective.value(beta);
    let gradient_norm = objective.gradient_norm(&params)?;
    Ok(FitResult {
        params,
        nll_at_optimum,
        iterations,
        converged: gradient_norm <= opts.gradient_tolerance,
        gradient_norm,
    })
}

struct FitObjective<'a> {
    samples: &'a [f64],
    log_abs: Vec<f64>,
    mode: FitMode,
}

impl<'a> FitObjective<'a> {
    fn new(samples: &'a [f64], mode: FitMode) -> Self {
        let log_abs = samples.iter().map(|x| x.abs().ln()).collect();
        Self {
            samples,
            log_abs,
            mode,
        }
    }

    /// ln( mean |x|^β ) via log-sum-exp; zeros contribute nothing.
    fn ln_mean_power(&self, beta: f64) -> f64 {
        let m = self
            .log_abs
            .iter()
            .filter(|l| l.is_finite())
            .fold(f64::NEG_INFINITY, |m, &l| m.max(beta * l));
        let sum: f64 = self
            .log_abs
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| (beta * l - m).exp())
            .sum();
        m + sum.ln() - (self.samples.len() as f64).ln()
    }

    fn alpha_at(&self, beta: f64) -> f64 {
        match self.mode {
            FitMode::BetaOnly => 1.0,
            FitMode::AlphaBeta => {
                let ln_alpha = (beta.ln() + self.ln_mean_power(beta)) / beta;
                ln_alpha.exp().clamp(ALPHA_MIN, ALPHA_MAX)
            }
        }
    }

    fn params_at(&self, beta: f64) -> GgdParams {
        GgdParams {
            mu: 0.0,
            alpha: self.alpha_at(beta),
            beta,
        }
    }

    /// Mean exact NLL with α at its (profiled) value.
    fn value(&self, beta: f64) -> f64 {
        let alpha = self.alpha_at(beta);
        let mean_pow = (self.ln_mean_power(beta) - beta * alpha.ln()).exp();
        mean_pow - beta.ln() + alpha.ln() + ln_gamma(1.0 / beta)
    }

    /// d/dβ of [`Self::value`]; by the envelope argument this is the partial
    /// β-derivative at the profiled α.
    fn slope(&self, beta: f64) -> f64 {
        let p = self.params_at(beta);
        self.mean_grad(&p).0
    }

    fn mean_grad(&self, p: &GgdParams) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let (mut gb, mut ga) = (0.0, 0.0);
        for &x in self.samples {
            // nll_grad cannot fail on validated params.
            let g = nll_grad(x, p, NllForm::Exact).expect("validated params");
            gb += g.d_beta;
            ga += g.d_alpha;
        }
        (gb / n, ga / n)
    }

    fn gradient_norm(&self, p: &GgdParams) -> Result<f64> {
        p.validate()?;
        let (gb, ga) = self.mean_grad(p);
        Ok(match self.mode {
            FitMode::BetaOnly => gb.abs(),
            FitMode::AlphaBeta => gb.hypot(ga),
        })
    }
}

/// ∫_{−∞}^{x} F(t) dt = E[(x − X)⁺] for a zero-mean GGD, in closed form.
///
/// For c ≥ 0, ∫_{−∞}^{−c} F = ½[α Γ(2/β)/Γ(1/β) Q(2/β, (c/α)^β) − c Q(1/β, (c/α)^β)],
/// and symmetry gives ∫_{−∞}^{x} F = x + ∫_{−∞}^{−x} F for x > 0.
pub fn cdf_antiderivative(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    let p = GgdParams::zero_mean(alpha, beta)?;
    if !x.is_finite() {
        return domain(format!("cdf antiderivative needs finite x, got {x}"));
    }
    let tail = left_tail_integral(x.abs(), &p)?;
    Ok(if x > 0.0 { x + tail } else { tail })
}

fn left_tail_integral(c: f64, p: &GgdParams) -> Result<f64> {
    let s = (c / p.alpha).powf(p.beta);
    let (_, q1) = inc_gamma_pair(1.0 / p.beta, s)?;
    let (_, q2) = inc_gamma_pair(2.0 / p.beta, s)?;
    let mean_abs = p.alpha * (ln_gamma(2.0 / p.beta) - ln_gamma(1.0 / p.beta)).exp();
    Ok(0.5 * (mean_abs * q2 - c * q1))
}

fn check_ssd_args(beta1: f64, beta2: f64, alpha: f64) -> Result<(GgdParams, GgdParams)> {
    Ok((
        GgdParams::zero_mean(alpha, beta1)?,
        GgdParams::zero_mean(alpha, beta2)?,
    ))
}

/// ∫_{−∞}^{x} [F₁(t) − F₂(t)] dt for X₁ ~ GGD(0, α, β₁), X₂ ~ GGD(0, α, β₂).
///
/// The integrand is integrated by adaptive Simpson on [−50α, x]; the part
/// below −50α is added in closed form, which matters for small shapes whose
/// tails carry substantial mass beyond the truncation point. When β₁ ≤ β₂
/// the result is nonnegative up to the quadrature tolerance.
pub fn ssd_integral(beta1: f64, beta2: f64, alpha: f64, x: f64) -> Result<f64> {
    let (p1, p2) = check_ssd_args(beta1, beta2, alpha)?;
    if !x.is_finite() {
        return domain(format!("dominance integral needs finite x, got {x}"));
    }
    let lower = -50.0 * alpha;
    let start = x.min(lower);
    let mut total = left_tail_integral(-start, &p1)? - left_tail_integral(-start, &p2)?;
    if x > lower {
        total += cdf_difference_integral(&p1, &p2, lower, x, SSD_QUAD_TOL)?;
    }
    Ok(total)
}

/// Running dominance integral over an ascending grid, accumulating segment
/// by segment instead of restarting from the truncation point.
pub fn ssd_profile(beta1: f64, beta2: f64, alpha: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let (p1, p2) = check_ssd_args(beta1, beta2, alpha)?;
    if xs.iter().any(|x| !x.is_finite()) {
        return domain("dominance grid must be finite");
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return domain("dominance grid must be ascending");
    }
    let Some(&first) = xs.first() else {
        return Ok(Vec::new());
    };
    let seg_tol = SSD_QUAD_TOL / (xs.len() as f64 + 1.0);
    let mut out = Vec::with_capacity(xs.len());
    let lower = -50.0 * alpha;
    let start = first.min(lower);
    let mut acc = left_tail_integral(-start, &p1)? - left_tail_integral(-start, &p2)?;
    let mut prev = start;
    for &x in xs {
        if x > prev {
            acc += cdf_difference_integral(&p1, &p2, prev, x, seg_tol)?;
            prev = x;
        }
        out.push(acc);
    }
    Ok(out)
}

fn cdf_difference_integral(
    p1: &GgdParams,
    p2: &GgdParams,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    if a < 0.0 && b > 0.0 {
        // The integrand has a kink at the common mode; split there.
        return Ok(cdf_difference_integral(p1, p2, a, 0.0, 0.5 * tol)?
            + cdf_difference_integral(p1, p2, 0.0, b, 0.5 * tol)?);
    }
    let f = |t: f64| -> Result<f64> { Ok(cdf_unchecked(t, p1)? - cdf_unchecked(t, p2)?) };
    // Panels no wider than α, so that the initial Simpson samples cannot all
    // land where the integrand is flat and stop the refinement early.
    let panels = ((b - a) / p1.alpha).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        total += adaptive_simpson(&f, lo, hi, panel_tol)?;
    }
    Ok(total)
}
