//! One-hidden-layer tanh critics with positive distribution heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ggd::{ALPHA_MAX, ALPHA_MIN, BETA_MAX, BETA_MIN};

/// Which positive heads sit next to the value output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    None,
    /// Q^σ, a standard deviation.
    Variance,
    /// Q^β with α fixed to 1.
    Beta,
    /// Q^α followed by Q^β.
    AlphaBeta,
}

impl HeadKind {
    pub fn n_heads(self) -> usize {
        match self {
            HeadKind::None => 0,
            HeadKind::Variance | HeadKind::Beta => 1,
            HeadKind::AlphaBeta => 2,
        }
    }

    /// Clamp box and initial output of head `j`.
    fn head_spec(self, j: usize) -> (f64, f64, f64) {
        match (self, j) {
            (HeadKind::Beta, 0) | (HeadKind::AlphaBeta, 1) => (BETA_MIN, BETA_MAX, 2.0),
            _ => (ALPHA_MIN, ALPHA_MAX, 1.0),
        }
    }
}

/// Network input: either a one-hot index or a dense feature vector.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    OneHot(usize),
    Dense(&'a [f64]),
}

/// Dense tanh MLP over a flat parameter vector laid out as
/// `[W1 (hidden × in), b1, W2 (out × hidden), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn zeros(in_dim: usize, hidden: usize, n_out: usize) -> Self {
        let n = hidden * in_dim + hidden + n_out * hidden + n_out;
        Self {
            in_dim,
            hidden,
            n_out,
            params: vec![0.0; n],
        }
    }

    fn b1_at(&self) -> usize {
        self.hidden * self.in_dim
    }

    fn w2_at(&self) -> usize {
        self.b1_at() + self.hidden
    }

    fn b2_at(&self) -> usize {
        self.w2_at() + self.n_out * self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn output_bias_mut(&mut self, o: usize) -> &mut f64 {
        let at = self.b2_at() + o;
        &mut self.params[at]
    }

    fn check_input(&self, x: Input<'_>) -> Result<()> {
        match x {
            Input::OneHot(i) if i >= self.in_dim => {
                domain(format!("one-hot index {i} >= input width {}", self.in_dim))
            }
            Input::Dense(v) if v.len() != self.in_dim => domain(format!(
                "feature length {} != input width {}",
                v.len(),
                self.in_dim
            )),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, x: Input<'_>, cache: &mut ForwardCache) -> Result<()> {
        self.check_input(x)?;
        cache.hidden.resize(self.hidden, 0.0);
        cache.out.resize(self.n_out, 0.0);
        self.forward_into(x, &mut cache.hidden, &mut cache.out);
        Ok(())
    }

    /// Unchecked forward pass into caller-provided buffers of width
    /// `hidden` and `n_out`.
    pub(crate) fn forward_into(&self, x: Input<'_>, hidden: &mut [f64], out: &mut [f64]) {
        let p = &self.params;
        let (b1, w2, b2) = (self.b1_at(), self.w2_at(), self.b2_at());
        for h in 0..self.hidden {
            let row = &p[h * self.in_dim..(h + 1) * self.in_dim];
            let pre = match x {
                Input::OneHot(i) => row[i],
                Input::Dense(v) => row.iter().zip(v).map(|(w, x)| w * x).sum(),
            };
            hidden[h] = (pre + p[b1 + h]).tanh();
        }
        for o in 0..self.n_out {
            let row = &p[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
            out[o] = p[b2 + o]
                + row
                    .iter()
                    .zip(hidden.iter())
                    .map(|(w, a)| w * a)
                    .sum::<f64>();
        }
    }

    /// Accumulates ∂L/∂params into `grad` given ∂L/∂outputs.
    pub fn backward(&self, x: Input<'_>, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        self.backward_from(x, &cache.hidden, d_out, grad);
    }

    pub(crate) fn backward_from(
        &self,
        x: Input<'_>,
        hidden: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
    ) {
        let p = &self.params;
        let (b1, w2, b2) = (self.b1_at(), self.w2_at(), self.b2_at());
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2 + o] += g;
            let row = w2 + o * self.hidden;
            for h in 0..self.hidden {
                grad[row + h] += g * hidden[h];
            }
        }
        for h in 0..self.hidden {
            let mut da = 0.0;
            for (o, &g) in d_out.iter().enumerate() {
                da += g * p[w2 + o * self.hidden + h];
            }
            let a = hidden[h];
            let dpre = da * (1.0 - a * a);
            if dpre == 0.0 {
                continue;
            }
            grad[b1 + h] += dpre;
            let row = h * self.in_dim;
            match x {
                Input::OneHot(i) => grad[row + i] += dpre,
                Input::Dense(v) => {
                    for (i, xi) in v.iter().enumerate() {
                        grad[row + i] += dpre * xi;
                    }
                }
            }
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Head output `clamp(softplus(z) + ε, lo, hi)` and its derivative in `z`.
pub fn head_transform(z: f64, eps: f64, lo: f64, hi: f64) -> (f64, f64) {
    let y = softplus(z) + eps;
    if y < lo {
        (lo, 0.0)
    } else if y > hi {
        (hi, 0.0)
    } else {
        (y, sigmoid(z))
    }
}

/// Value prediction and transformed heads of one critic.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticOutput {
    pub value: f64,
    pub heads: Vec<f64>,
    /// d head / d pre-activation, zero where the clamp is active.
    pub head_slopes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub head_kind: HeadKind,
    pub softplus_epsilon: f64,
}

/// Independently initialised critics sharing one architecture. Each critic
/// has a shared torso feeding the value output and the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble {
    pub critics: Vec<Mlp>,
    pub shape: NetworkShape,
}

impl CriticEnsemble {
    pub fn new<R: Rng>(
        n_critics: usize,
        shape: NetworkShape,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_critics < 2 {
            return Err(Error::Config(format!(
                "need at least 2 critics, got {n_critics}"
            )));
        }
        if shape.feature_dim == 0 || shape.hidden_dim == 0 {
            return Err(Error::Config(
                "feature and hidden widths must be positive".into(),
            ));
        }
        if !(shape.softplus_epsilon.is_finite() && shape.softplus_epsilon > 0.0) {
            return Err(Error::Config(format!(
                "softplus_epsilon must be finite and > 0, got {}",
                shape.softplus_epsilon
            )));
        }
        if !(init_scale.is_finite() && init_scale >= 0.0) {
            return Err(Error::Config(format!(
                "init_scale must be finite and >= 0, got {init_scale}"
            )));
        }
        let n_out = 1 + shape.head_kind.n_heads();
        let critics = (0..n_critics)
            .map(|_| {
                let mut m = Mlp::zeros(shape.feature_dim, shape.hidden_dim, n_out);
                let s1 = init_scale * (6.0 / (shape.feature_dim + shape.hidden_dim) as f64).sqrt();
                let s2 = 0.1 * init_scale * (6.0 / (shape.hidden_dim + n_out) as f64).sqrt();
                let (b1, w2, b2) = (m.b1_at(), m.w2_at(), m.b2_at());
                for (i, w) in m.params.iter_mut().enumerate() {
                    *w = if i < b1 {
                        rng.random_range(-1.0..=1.0) * s1
                    } else if (w2..b2).contains(&i) {
                        rng.random_range(-1.0..=1.0) * s2
                    } else {
                        0.0
                    };
                }
                for j in 0..shape.head_kind.n_heads() {
                    let (_, _, init) = shape.head_kind.head_spec(j);
                    *m.output_bias_mut(1 + j) = inverse_softplus(init - shape.softplus_epsilon);
                }
                m
            })
            .collect();
        Ok(Self { critics, shape })
    }

    pub fn n_critics(&self) -> usize {
        self.critics.len()
    }

    pub fn head_kind(&self) -> HeadKind {
        self.shape.head_kind
    }

    /// Transformed head `j` and its slope from one critic's raw outputs.
    pub(crate) fn head(&self, raw: &[f64], j: usize) -> (f64, f64) {
        let (lo, hi, _) = self.shape.head_kind.head_spec(j);
        head_transform(raw[1 + j], self.shape.softplus_epsilon, lo, hi)
    }

    /// Maps raw outputs of one critic to its value and transformed heads.
    pub fn interpret(&self, raw: &[f64]) -> CriticOutput {
        let kind = self.shape.head_kind;
        let mut heads = Vec::with_capacity(kind.n_heads());
        let mut head_slopes = Vec::with_capacity(kind.n_heads());
        for j in 0..kind.n_heads() {
            let (lo, hi, _) = kind.head_spec(j);
            let (y, dy) = head_transform(raw[1 + j], self.shape.softplus_epsilon, lo, hi);
            heads.push(y);
            head_slopes.push(dy);
        }
        CriticOutput {
            value: raw[0],
            heads,
            head_slopes,
        }
    }

    pub fn forward_input(&self, x: Input<'_>) -> Result<Vec<CriticOutput>> {
        let mut cache = ForwardCache::default();
        self.critics
            .iter()
            .map(|c| {
                c.forward(x, &mut cache)?;
                Ok(self.interpret(&cache.out))
            })
            .collect()
    }

    /// Per-critic outputs for a dense feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<CriticOutput>> {
        self.forward_input(Input::Dense(features))
    }

    /// Flat copy of every parameter, critic by critic.
    pub fn flat_params(&self) -> Vec<f64> {
        self.critics
            .iter()
            .flat_map(|c| c.params.iter().copied())
            .collect()
    }

    /// Mutable access to the `idx`-th parameter in [`Self::flat_params`] order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for c in &mut self.critics {
            if idx < c.params.len() {
                return &mut c.params[idx];
            }
            idx -= c.params.len();
        }
        panic!("parameter index out of range");
    }

    pub fn n_params(&self) -> usize {
        self.critics.iter().map(Mlp::n_params).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(kind: HeadKind) -> NetworkShape {
        NetworkShape {
            feature_dim: 6,
            hidden_dim: 5,
            head_kind: kind,
            softplus_epsilon: 0.05,
        }
    }

    #[test]
    fn zero_weights_expose_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut e = CriticEnsemble::new(3, shape(HeadKind::AlphaBeta), 0.0, &mut rng).unwrap();
        for c in &mut e.critics {
            *c.output_bias_mut(0) = 0.75;
        }
        let out = e.forward(&[0.3, -1.0, 0.0, 2.0, 0.1, 0.0]).unwrap();
        for o in out {
            assert_eq!(o.value, 0.75);
            assert!((o.heads[0] - 1.0).abs() < 1e-12);
            assert!((o.heads[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn head_floor_is_epsilon() {
        let (y, dy) = head_transform(-50.0, 0.05, BETA_MIN, BETA_MAX);
        assert!((y - 0.05).abs() < 1e-20);
        assert!(dy < 1e-20);
        let (y, dy) = head_transform(100.0, 0.05, BETA_MIN, BETA_MAX);
        assert_eq!((y, dy), (BETA_MAX, 0.0));
        let (y, _) = head_transform(0.0, 0.05, BETA_MIN, BETA_MAX);
        assert!((y - (2f64.ln() + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn input_width_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = CriticEnsemble::new(2, shape(HeadKind::None), 1.0, &mut rng).unwrap();
        assert!(e.forward(&[1.0; 5]).is_err());
        assert!(e.forward_input(Input::OneHot(6)).is_err());
        assert!(CriticEnsemble::new(1, shape(HeadKind::None), 1.0, &mut rng).is_err());
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = Mlp::zeros(4, 6, 3);
        for w in m.params.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let x = [0.4, -0.7, 1.3, 0.2];
        let d_out = [0.7, -1.1, 0.4];
        let objective = |m: &Mlp| {
            let mut c = ForwardCache::default();
            m.forward(Input::Dense(&x), &mut c).unwrap();
            c.out.iter().zip(d_out).map(|(o, g)| o * g).sum::<f64>()
        };
        let mut cache = ForwardCache::default();
        m.forward(Input::Dense(&x), &mut cache).unwrap();
        let mut grad = vec![0.0; m.n_params()];
        m.backward(Input::Dense(&x), &cache, &d_out, &mut grad);
        let h = 1e-6;
        for i in 0..m.n_params() {
            let mut up = m.clone();
            up.params[i] += h;
            let mut dn = m.clone();
            dn.params[i] -= h;
            let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-5 * fd.abs().max(1e-3),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn one_hot_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = CriticEnsemble::new(2, shape(HeadKind::Beta), 1.0, &mut rng).unwrap();
        let mut x = [0.0; 6];
        x[4] = 1.0;
        assert_eq!(
            e.forward(&x).unwrap(),
            e.forward_input(Input::OneHot(4)).unwrap()
        );
    }
}
