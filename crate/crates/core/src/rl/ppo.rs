//! Clipped-surrogate loss, minibatch samplers, and the inner update loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_advantages, Action, AdvantageBatch, PolicyGrads, PolicyParams, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, ParamSet};

/// Denominator policy of the probability ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioBaseline {
    /// The parameters before the previous inner step; for the first inner step of an outer
    /// iteration, the parameters at the start of the previous outer iteration.
    PreviousIterate,
    /// The policy that produced (or re-scored) the batch, fixed for the whole inner loop.
    Rollout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a> {
    pub obs: &'a [f64],
    pub action: &'a Action,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub return_target: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// `-policy_term + vf_coef * value_loss - ent_coef * entropy`.
    pub loss: f64,
    /// Mean clipped surrogate.
    pub policy_term: f64,
    /// Mean squared error of the critic.
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub ratios: Vec<f64>,
    pub grads: PolicyGrads,
}

/// Log-ratios are saturated at `±LOG_RATIO_LIMIT` before exponentiation. Only the
/// previous-iterate baseline gets there: on the first inner step the denominator is a
/// policy one whole outer iteration old, and a sharpened policy can put `exp(1000)` on it.
pub const LOG_RATIO_LIMIT: f64 = 20.0;

/// Clipped-surrogate PPO loss and its exact gradient with respect to `params`.
pub fn ppo_loss(params: &PolicyParams, samples: &[LossSample<'_>], coefs: LossCoefs) -> Result<LossOutput> {
    if samples.is_empty() {
        return Err(Error::Shape("ppo_loss needs a nonempty batch".into()));
    }
    if !(coefs.clip > 0.0 && coefs.clip < 1.0) {
        return Err(Error::Config(format!("clip range must lie in (0, 1), got {}", coefs.clip)));
    }
    let n = samples.len() as f64;
    let mut grads = params.zero_grads();
    let (mut policy_term, mut value_loss, mut entropy, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    let mut ratios = Vec::with_capacity(samples.len());

    for (j, s) in samples.iter().enumerate() {
        let acts = params.actor.forward_cached(s.obs)?;
        let dist = params.dist_from_actor_output(acts.output());
        let log_prob = dist.log_prob(s.action)?;
        let log_ratio = log_prob - s.old_log_prob;
        if log_ratio.is_nan() {
            return Err(Error::Numeric(format!(
                "probability ratio is NaN for sample {j} (log-prob {log_prob}, old log-prob {})",
                s.old_log_prob
            )));
        }
        let saturated = log_ratio.abs() > LOG_RATIO_LIMIT;
        let ratio = log_ratio.clamp(-LOG_RATIO_LIMIT, LOG_RATIO_LIMIT).exp();
        ratios.push(ratio);
        let unclipped = ratio * s.advantage;
        let clipped_term = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip) * s.advantage;
        let surrogate = unclipped.min(clipped_term);
        if unclipped > clipped_term {
            clipped += 1;
        }
        policy_term += surrogate / n;
        let h = dist.entropy();
        entropy += h / n;

        // d(-surrogate)/d log π = -A * r while the unclipped branch is active, else 0.
        // A saturated ratio is constant in the parameters, so it contributes no gradient.
        let w_logp = if unclipped <= clipped_term && !saturated { -s.advantage * ratio / n } else { 0.0 };
        params.accumulate_actor_grad(&acts, s.action, w_logp, -coefs.ent_coef / n, &mut grads)?;

        let critic_acts = params.critic.forward_cached(s.obs)?;
        let v = critic_acts.output()[0];
        let err = v - s.return_target;
        value_loss += err * err / n;
        params
            .critic
            .backward(&critic_acts, &[2.0 * coefs.vf_coef * err / n], &mut grads.critic)?;
    }

    Ok(LossOutput {
        loss: -policy_term + coefs.vf_coef * value_loss - coefs.ent_coef * entropy,
        policy_term,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 / n,
        ratios,
        grads,
    })
}

/// Flattened, advantage-annotated transitions ready for minibatch updates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    /// Log-probabilities under the policy that collected (or re-scored) each transition.
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn push(&mut self, traj: &Trajectory, log_probs: &[f64], adv: &AdvantageBatch) -> Result<()> {
        let n = traj.len();
        if log_probs.len() != n || adv.advantages.len() != n || adv.returns.len() != n {
            return Err(Error::Shape(format!(
                "trajectory of length {n} paired with {} log-probs and {} advantages",
                log_probs.len(),
                adv.advantages.len()
            )));
        }
        self.observations.extend(traj.observations.iter().cloned());
        self.actions.extend(traj.actions.iter().cloned());
        self.old_log_probs.extend_from_slice(log_probs);
        self.advantages.extend_from_slice(&adv.advantages);
        self.returns.extend_from_slice(&adv.returns);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchSource {
    Uniform,
    Prioritized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub indices: Vec<usize>,
    pub source: BatchSource,
}

/// Chooses the minibatches of one epoch over a training batch of `n` samples.
pub trait BatchSampler {
    fn epoch_plan(&mut self, n: usize, batch_size: usize) -> Vec<Minibatch>;
}

/// Shuffles the indices once per epoch and partitions them into consecutive minibatches
/// (the last one may be short).
pub fn uniform_partition<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub struct UniformSampler<'a, R: Rng + ?Sized> {
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> BatchSampler for UniformSampler<'_, R> {
    fn epoch_plan(&mut self, n: usize, batch_size: usize) -> Vec<Minibatch> {
        uniform_partition(n, batch_size, self.rng)
            .into_iter()
            .map(|indices| Minibatch {
                indices,
                source: BatchSource::Uniform,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub normalize_advantage: bool,
    pub ratio: RatioBaseline,
}

impl UpdateConfig {
    pub fn coefs(&self) -> LossCoefs {
        LossCoefs {
            clip: self.clip,
            vf_coef: self.vf_coef,
            ent_coef: self.ent_coef,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub grad_steps: usize,
    pub uniform_batches: usize,
    pub prioritized_batches: usize,
    pub mean_loss: f64,
    pub mean_value_loss: f64,
    pub mean_entropy: f64,
    pub clip_fraction: f64,
}

impl UpdateStats {
    fn absorb(&mut self, other: &UpdateStats) {
        let total = (self.grad_steps + other.grad_steps).max(1) as f64;
        let (a, b) = (self.grad_steps as f64 / total, other.grad_steps as f64 / total);
        self.mean_loss = a * self.mean_loss + b * other.mean_loss;
        self.mean_value_loss = a * self.mean_value_loss + b * other.mean_value_loss;
        self.mean_entropy = a * self.mean_entropy + b * other.mean_entropy;
        self.clip_fraction = a * self.clip_fraction + b * other.clip_fraction;
        self.grad_steps += other.grad_steps;
        self.uniform_batches += other.uniform_batches;
        self.prioritized_batches += other.prioritized_batches;
    }
}

/// Policy parameters together with their optimizer and the ratio snapshot carried
/// between outer iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub params: PolicyParams,
    pub optimizer: Adam,
    /// Parameters at the start of the previous outer iteration.
    pub outer_prev: PolicyParams,
}

impl Learner {
    pub fn new(params: PolicyParams, learning_rate: f64) -> Self {
        let optimizer = Adam::for_params(&params, learning_rate);
        Self {
            outer_prev: params.clone(),
            params,
            optimizer,
        }
    }

    /// Runs the full inner loop of one outer iteration: `n_epochs` epochs of minibatch
    /// updates chosen by `sampler`.
    pub fn update(&mut self, batch: &TrainingBatch, cfg: &UpdateConfig, sampler: &mut dyn BatchSampler) -> Result<UpdateStats> {
        let mut prev = std::mem::replace(&mut self.outer_prev, self.params.clone());
        let mut stats = UpdateStats::default();
        for _ in 0..cfg.n_epochs {
            let epoch = self.update_epoch(batch, cfg, sampler, &mut prev)?;
            stats.absorb(&epoch);
        }
        Ok(stats)
    }

    /// One epoch. `prev` holds the ratio denominator for [`RatioBaseline::PreviousIterate`]
    /// and is advanced to the pre-step parameters after every minibatch.
    pub fn update_epoch(
        &mut self,
        batch: &TrainingBatch,
        cfg: &UpdateConfig,
        sampler: &mut dyn BatchSampler,
        prev: &mut PolicyParams,
    ) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::Shape("cannot update on an empty training batch".into()));
        }
        let mut stats = UpdateStats::default();
        let (mut loss_sum, mut vloss_sum, mut ent_sum, mut clip_sum) = (0.0, 0.0, 0.0, 0.0);
        for mb in sampler.epoch_plan(batch.len(), cfg.batch_size) {
            let mut adv: Vec<f64> = mb.indices.iter().map(|&i| batch.advantages[i]).collect();
            if cfg.normalize_advantage {
                normalize_advantages(&mut adv);
            }
            let old: Vec<f64> = match cfg.ratio {
                RatioBaseline::Rollout => mb.indices.iter().map(|&i| batch.old_log_probs[i]).collect(),
                RatioBaseline::PreviousIterate => mb
                    .indices
                    .iter()
                    .map(|&i| prev.log_prob(&batch.observations[i], &batch.actions[i]))
                    .collect::<Result<_>>()?,
            };
            let samples: Vec<LossSample<'_>> = mb
                .indices
                .iter()
                .enumerate()
                .map(|(k, &i)| LossSample {
                    obs: &batch.observations[i],
                    action: &batch.actions[i],
                    old_log_prob: old[k],
                    advantage: adv[k],
                    return_target: batch.returns[i],
                })
                .collect();
            let mut out = ppo_loss(&self.params, &samples, cfg.coefs())?;
            clip_grad_norm(&mut out.grads, cfg.max_grad_norm);
            if cfg.ratio == RatioBaseline::PreviousIterate {
                prev.clone_from(&self.params);
            }
            self.optimizer.step(&mut self.params, &out.grads)?;
            debug_assert!(self.params.all_finite());

            stats.grad_steps += 1;
            match mb.source {
                BatchSource::Uniform => stats.uniform_batches += 1,
                BatchSource::Prioritized => stats.prioritized_batches += 1,
            }
            loss_sum += out.loss;
            vloss_sum += out.value_loss;
            ent_sum += out.entropy;
            clip_sum += out.clip_fraction;
        }
        let k = stats.grad_steps.max(1) as f64;
        stats.mean_loss = loss_sum / k;
        stats.mean_value_loss = vloss_sum / k;
        stats.mean_entropy = ent_sum / k;
        stats.clip_fraction = clip_sum / k;
        Ok(stats)
    }
}
