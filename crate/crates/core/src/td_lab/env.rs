//! Noisy chain MDP with exact dynamic-programming oracles.
//!
//! States `0..n` sit on a line. Action 0 moves left, action 1 moves right and
//! any further action stays put. With probability `transition_noise` the next
//! state is instead drawn uniformly. Landing (by the intended move) on the
//! right end pays a mean reward of 1; everything else pays 0. Zero-mean noise
//! from the configured family is added to every reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggd::{GgdParams, GgdSampler};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardNoise {
    Gaussian {
        sigma: f64,
    },
    Laplace {
        scale: f64,
    },
    Ggd {
        alpha: f64,
        beta: f64,
    },
    /// Shifted by its mean so the noise is centred.
    Gumbel {
        scale: f64,
    },
}

impl RewardNoise {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RewardNoise::Gaussian { sigma } => sigma.is_finite() && sigma >= 0.0,
            RewardNoise::Laplace { scale } | RewardNoise::Gumbel { scale } => {
                scale.is_finite() && scale > 0.0
            }
            RewardNoise::Ggd { alpha, beta } => GgdParams::zero_mean(alpha, beta).is_ok(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reward noise {self:?}")))
        }
    }

    /// Population variance of the noise.
    pub fn variance(&self) -> Result<f64> {
        match *self {
            RewardNoise::Gaussian { sigma } => Ok(sigma * sigma),
            RewardNoise::Laplace { scale } => Ok(2.0 * scale * scale),
            RewardNoise::Ggd { alpha, beta } => {
                crate::ggd::variance(&GgdParams::zero_mean(alpha, beta)?)
            }
            RewardNoise::Gumbel { scale } => Ok(std::f64::consts::PI.powi(2) / 6.0 * scale * scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub reward_noise: RewardNoise,
    pub transition_noise: f64,
    pub seed: u64,
    pub horizon: usize,
}

impl ChainMdpSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_states < 2 {
            return bad(format!("n_states must be >= 2, got {}", self.n_states));
        }
        if self.n_actions < 2 {
            return bad(format!("n_actions must be >= 2, got {}", self.n_actions));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            ));
        }
        if !(0.0..=1.0).contains(&self.transition_noise) {
            return bad(format!(
                "transition_noise must lie in [0, 1], got {}",
                self.transition_noise
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        self.reward_noise.validate()
    }

    /// Next state of the intended move.
    pub fn intended_next(&self, s: usize, a: usize) -> usize {
        match a {
            0 => s.saturating_sub(1),
            1 => (s + 1).min(self.n_states - 1),
            _ => s,
        }
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        if self.intended_next(s, a) == self.n_states - 1 {
            1.0
        } else {
            0.0
        }
    }

    /// Row-major index of a state-action pair.
    pub fn sa_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// E[f(s') | s, a].
    fn expect_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        let p = self.transition_noise;
        let uniform = if p > 0.0 {
            p * f.iter().sum::<f64>() / self.n_states as f64
        } else {
            0.0
        };
        (1.0 - p) * f[self.intended_next(s, a)] + uniform
    }

    /// Q(s, a) = r̄(s, a) + γ E[V(s')], flattened by [`Self::sa_index`].
    pub fn q_from_v(&self, v: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_pairs()];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                q[self.sa_index(s, a)] =
                    self.mean_reward(s, a) + self.discount * self.expect_next(s, a, v);
            }
        }
        q
    }
}

const DP_TOL: f64 = 1e-12;
const DP_MAX_ITERS: usize = 1_000_000;

/// Optimal action values Q* by value iteration.
pub fn value_iteration(spec: &ChainMdpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut v = vec![0.0; spec.n_states];
    for _ in 0..DP_MAX_ITERS {
        let q = spec.q_from_v(&v);
        let next: Vec<f64> = (0..spec.n_states)
            .map(|s| {
                (0..spec.n_actions)
                    .map(|a| q[spec.sa_index(s, a)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if diff <= DP_TOL {
            return Ok(spec.q_from_v(&v));
        }
    }
    Err(Error::Convergence {
        what: "value iteration",
        achieved: f64::NAN,
    })
}

/// State values of a stochastic policy given as `policy[s][a]` probabilities.
pub fn policy_evaluation(spec: &ChainMdpSpec, policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    spec.validate()?;
    if policy.len() != spec.n_states || policy.iter().any(|p| p.len() != spec.n_actions) {
        return Err(Error::Domain("policy shape does not match the MDP".into()));
    }
    let mut v = vec![0.0; spec.n_states];
    for _ in 0..DP_MAX_ITERS {
        let q = spec.q_from_v(&v);
        let next: Vec<f64> = (0..spec.n_states)
            .map(|s| {
                (0..spec.n_actions)
                    .map(|a| policy[s][a] * q[spec.sa_index(s, a)])
                    .sum()
            })
            .collect();
        let diff = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if diff <= DP_TOL {
            return Ok(v);
        }
    }
    Err(Error::Convergence {
        what: "policy evaluation",
        achieved: f64::NAN,
    })
}

/// Deterministic policy picking the first maximiser of `q` in every state.
pub fn greedy_policy(spec: &ChainMdpSpec, q: &[f64]) -> Vec<Vec<f64>> {
    (0..spec.n_states)
        .map(|s| {
            let best = argmax(&q[spec.sa_index(s, 0)..spec.sa_index(s, 0) + spec.n_actions]);
            (0..spec.n_actions)
                .map(|a| if a == best { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone)]
enum NoiseSampler {
    Silent,
    Normal(Normal<f64>),
    Ggd(GgdSampler),
    Gumbel(Gumbel<f64>, f64),
}

impl NoiseSampler {
    fn new(noise: RewardNoise) -> Result<Self> {
        let cfg = |e: String| Error::Config(e);
        Ok(match noise {
            RewardNoise::Gaussian { sigma: 0.0 } => NoiseSampler::Silent,
            RewardNoise::Gaussian { sigma } => {
                NoiseSampler::Normal(Normal::new(0.0, sigma).map_err(|e| cfg(e.to_string()))?)
            }
            RewardNoise::Laplace { scale } => {
                NoiseSampler::Ggd(GgdSampler::new(GgdParams::zero_mean(scale, 1.0)?)?)
            }
            RewardNoise::Ggd { alpha, beta } => {
                NoiseSampler::Ggd(GgdSampler::new(GgdParams::zero_mean(alpha, beta)?)?)
            }
            RewardNoise::Gumbel { scale } => NoiseSampler::Gumbel(
                Gumbel::new(0.0, scale).map_err(|e| cfg(e.to_string()))?,
                scale * EULER_GAMMA,
            ),
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Silent => 0.0,
            NoiseSampler::Normal(d) => d.sample(rng),
            NoiseSampler::Ggd(s) => s.draw(rng),
            NoiseSampler::Gumbel(d, shift) => d.sample(rng) - shift,
        }
    }
}

/// Seeded simulator for a [`ChainMdpSpec`].
#[derive(Debug, Clone)]
pub struct ChainEnv {
    spec: ChainMdpSpec,
    rng: ChaCha8Rng,
    noise: NoiseSampler,
    state: usize,
    t: usize,
}

impl ChainEnv {
    pub fn new(spec: ChainMdpSpec) -> Result<Self> {
        Self::with_seed(spec, spec.seed)
    }

    /// Same dynamics with the random stream seeded by `seed` instead of the
    /// spec's own seed.
    pub fn with_seed(spec: ChainMdpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut env = Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: NoiseSampler::new(spec.reward_noise)?,
            state: 0,
            t: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn spec(&self) -> &ChainMdpSpec {
        &self.spec
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Starts a new episode in a uniformly drawn state.
    pub fn reset(&mut self) -> usize {
        self.state = self.rng.random_range(0..self.spec.n_states);
        self.t = 0;
        self.state
    }

    /// Advances one step. The second value is true when the episode hit its
    /// horizon; the caller decides whether to reset. Truncation is not
    /// termination, so targets keep bootstrapping through it.
    pub fn step(&mut self, action: usize) -> Result<(Transition, bool)> {
        if action >= self.spec.n_actions {
            return Err(Error::Domain(format!(
                "action {action} out of range for {} actions",
                self.spec.n_actions
            )));
        }
        let s = self.state;
        let next = if self.spec.transition_noise > 0.0
            && self.rng.random::<f64>() < self.spec.transition_noise
        {
            self.rng.random_range(0..self.spec.n_states)
        } else {
            self.spec.intended_next(s, action)
        };
        let reward = self.spec.mean_reward(s, action) + self.noise.draw(&mut self.rng);
        self.state = next;
        self.t += 1;
        Ok((
            Transition {
                state: s,
                action,
                reward,
                next_state: next,
            },
            self.t >= self.spec.horizon,
        ))
    }
}
