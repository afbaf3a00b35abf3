//! Actor-critic parameters and the action distributions they induce.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{Activations, Mlp, MlpGrads, ParamSet};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Actor MLP (logits or Gaussian means), critic MLP, and the state-independent
/// log-std vector for continuous actions (empty for discrete actions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
    pub action_space: ActionSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub actor: MlpGrads,
    pub critic: MlpGrads,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Stochastic,
    /// Mode of the distribution (argmax / mean).
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub dist: ActionDist,
    pub value: f64,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActionDist {
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => log_probs
                .get(*a)
                .copied()
                .ok_or_else(|| Error::Shape(format!("action {a} outside {} categories", log_probs.len()))),
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(a)) => {
                if a.len() != mean.len() {
                    return Err(Error::Shape(format!(
                        "action has {} dims, distribution has {}",
                        a.len(),
                        mean.len()
                    )));
                }
                Ok(a.iter()
                    .zip(mean.iter().zip(log_std))
                    .map(|(x, (m, ls))| {
                        let z = (x - m) / ls.exp();
                        -0.5 * z * z - ls - HALF_LN_2PI
                    })
                    .sum())
            }
            _ => Err(Error::Shape("action kind does not match the distribution".into())),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { log_probs } => -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>(),
            ActionDist::Gaussian { log_std, .. } => log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mode: SampleMode, rng: &mut R) -> Action {
        match (self, mode) {
            (ActionDist::Categorical { log_probs }, SampleMode::Deterministic) => {
                let mut best = 0;
                for (i, lp) in log_probs.iter().enumerate() {
                    if *lp > log_probs[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            (ActionDist::Categorical { log_probs }, SampleMode::Stochastic) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, lp) in log_probs.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                Action::Discrete(log_probs.len() - 1)
            }
            (ActionDist::Gaussian { mean, .. }, SampleMode::Deterministic) => Action::Continuous(mean.clone()),
            (ActionDist::Gaussian { mean, log_std }, SampleMode::Stochastic) => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
        }
    }
}

impl PolicyParams {
    /// Orthogonally initialized actor and critic with the given hidden widths: hidden
    /// gain √2, actor output gain 0.01, critic output gain 1, log-std 0.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_space: ActionSpace, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let act_out = match action_space {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous { dim, .. } => dim,
        };
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(act_out);
        critic_sizes.push(1);
        let gain = std::f64::consts::SQRT_2;
        let actor = Mlp::orthogonal(&actor_sizes, gain, 0.01, rng)?;
        let critic = Mlp::orthogonal(&critic_sizes, gain, 1.0, rng)?;
        let log_std = match action_space {
            ActionSpace::Discrete(_) => Vec::new(),
            ActionSpace::Continuous { dim, .. } => vec![0.0; dim],
        };
        Ok(Self {
            actor,
            critic,
            log_std,
            action_space,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub fn dist_from_actor_output(&self, out: &[f64]) -> ActionDist {
        match self.action_space {
            ActionSpace::Discrete(_) => ActionDist::Categorical { log_probs: log_softmax(out) },
            ActionSpace::Continuous { .. } => ActionDist::Gaussian {
                mean: out.to_vec(),
                log_std: self.clamped_log_std(),
            },
        }
    }

    pub fn dist(&self, obs: &[f64]) -> Result<ActionDist> {
        Ok(self.dist_from_actor_output(&self.actor.forward(obs)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }

    pub fn evaluate(&self, obs: &[f64]) -> Result<PolicyOutput> {
        Ok(PolicyOutput {
            dist: self.dist(obs)?,
            value: self.value(obs)?,
        })
    }

    pub fn log_prob(&self, obs: &[f64], action: &Action) -> Result<f64> {
        self.dist(obs)?.log_prob(action)
    }

    pub fn zero_grads(&self) -> PolicyGrads {
        PolicyGrads {
            actor: self.actor.zero_grads(),
            critic: self.critic.zero_grads(),
            log_std: vec![0.0; self.log_std.len()],
        }
    }

    /// Accumulates the gradient of `w_logp * log π(a|s) + w_ent * H(π(·|s))` into `grads`,
    /// given the actor activations for `s`.
    pub(crate) fn accumulate_actor_grad(
        &self,
        acts: &Activations,
        action: &Action,
        w_logp: f64,
        w_ent: f64,
        grads: &mut PolicyGrads,
    ) -> Result<()> {
        let out = acts.output();
        let mut d_out = vec![0.0; out.len()];
        match (&self.action_space, action) {
            (ActionSpace::Discrete(_), Action::Discrete(a)) => {
                let lp = log_softmax(out);
                let entropy: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                for (k, d) in d_out.iter_mut().enumerate() {
                    let p = lp[k].exp();
                    let onehot = if k == *a { 1.0 } else { 0.0 };
                    *d = w_logp * (onehot - p) - w_ent * p * (lp[k] + entropy);
                }
            }
            (ActionSpace::Continuous { .. }, Action::Continuous(a)) => {
                for (i, d) in d_out.iter_mut().enumerate() {
                    let raw = self.log_std[i];
                    let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let var = (2.0 * ls).exp();
                    let diff = a[i] - out[i];
                    *d = w_logp * diff / var;
                    if raw > LOG_STD_MIN && raw < LOG_STD_MAX {
                        grads.log_std[i] += w_logp * (diff * diff / var - 1.0) + w_ent;
                    }
                }
            }
            _ => return Err(Error::Shape("action kind does not match the policy".into())),
        }
        self.actor.backward(acts, &d_out, &mut grads.actor)?;
        Ok(())
    }
}

impl ParamSet for PolicyParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.actor.slices();
        out.extend(self.critic.slices());
        out.push(&self.log_std);
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.actor.slices_mut();
        out.extend(self.critic.slices_mut());
        out.push(&mut self.log_std);
        out
    }
}

impl ParamSet for PolicyGrads {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.actor.slices();
        out.extend(self.critic.slices());
        out.push(&self.log_std);
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.actor.slices_mut();
        out.extend(self.critic.slices_mut());
        out.push(&mut self.log_std);
        out
    }
}
