//! Random network distillation: a novelty bonus equal to a trained predictor's error
//! against a frozen, randomly initialized target network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, MlpGrads};

pub const RND_HIDDEN: [usize; 2] = [64, 64];
pub const RND_EMBEDDING: usize = 32;
pub const OBS_CLIP: f64 = 5.0;

/// Running per-dimension mean and variance, merged batch by batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
        }
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        let mut bmean = vec![0.0; dim];
        for x in batch {
            bmean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut bvar = vec![0.0; dim];
        for x in batch {
            bvar.iter_mut()
                .zip(x.iter().zip(&bmean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        if self.count == 0.0 {
            self.mean = bmean;
            self.var = bvar;
            self.count = n;
            return;
        }
        let total = self.count + n;
        for k in 0..dim {
            let delta = bmean[k] - self.mean[k];
            let m2 = self.var[k] * self.count + bvar[k] * n + delta * delta * self.count * n / total;
            self.mean[k] += delta * n / total;
            self.var[k] = m2 / total;
        }
        self.count = total;
    }

    pub fn update_scalars(&mut self, xs: &[f64]) {
        let batch: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        self.update(&batch);
    }

    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

/// Frozen target, trained predictor, and the normalizers feeding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RndPair {
    target: Mlp,
    pub predictor: Mlp,
    pub optimizer: Adam,
    pub obs_normalizer: RunningMeanStd,
    pub intrinsic_normalizer: RunningMeanStd,
}

impl RndPair {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, learning_rate: f64, rng: &mut R) -> Result<Self> {
        let sizes = [&[obs_dim][..], &RND_HIDDEN, &[RND_EMBEDDING]].concat();
        let gain = std::f64::consts::SQRT_2;
        let target = Mlp::orthogonal(&sizes, gain, 1.0, rng)?;
        let predictor = Mlp::orthogonal(&sizes, gain, 1.0, rng)?;
        Ok(Self::from_nets(target, predictor, learning_rate))
    }

    pub fn from_nets(target: Mlp, predictor: Mlp, learning_rate: f64) -> Self {
        let dim = target.input_dim();
        Self {
            optimizer: Adam::for_params(&predictor, learning_rate),
            target,
            predictor,
            obs_normalizer: RunningMeanStd::new(dim),
            intrinsic_normalizer: RunningMeanStd::new(1),
        }
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn obs_dim(&self) -> usize {
        self.target.input_dim()
    }

    /// Standardized with the running statistics and clipped to `±5`.
    pub fn normalize_obs(&self, obs: &[f64]) -> Vec<f64> {
        let n = &self.obs_normalizer;
        obs.iter()
            .zip(n.mean.iter().zip(&n.var))
            .map(|(x, (m, v))| ((x - m) / (v + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }

    /// `|target(x) - predictor(x)|^2` on the normalized observation, before reward scaling.
    pub fn prediction_error(&self, obs: &[f64]) -> Result<f64> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Shape(format!("RND expects {}-d observations, got {}", self.obs_dim(), obs.len())));
        }
        let x = self.normalize_obs(obs);
        let t = self.target.forward(&x)?;
        let p = self.predictor.forward(&x)?;
        Ok(t.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Running standard deviation of past prediction errors (1 before any statistics exist).
    pub fn intrinsic_scale(&self) -> f64 {
        if self.intrinsic_normalizer.count > 0.0 {
            self.intrinsic_normalizer.var[0].sqrt() + 1e-8
        } else {
            1.0
        }
    }

    /// Prediction error divided by [`RndPair::intrinsic_scale`].
    pub fn intrinsic_reward(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.prediction_error(obs)? / self.intrinsic_scale())
    }

    /// Mean over the batch of `|target - predictor|^2 / embedding_dim`, with its gradient
    /// with respect to the predictor.
    pub fn predictor_loss(&self, observations: &[Vec<f64>]) -> Result<(f64, MlpGrads)> {
        if observations.is_empty() {
            return Err(Error::Shape("RND update needs a nonempty batch".into()));
        }
        let scale = 1.0 / (observations.len() * RND_EMBEDDING) as f64;
        let mut grads = self.predictor.zero_grads();
        let mut loss = 0.0;
        for obs in observations {
            let x = self.normalize_obs(obs);
            let t = self.target.forward(&x)?;
            let acts = self.predictor.forward_cached(&x)?;
            let diff: Vec<f64> = acts.output().iter().zip(&t).map(|(p, t)| p - t).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>() * scale;
            let g: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
            self.predictor.backward(&acts, &g, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// One Adam step of the predictor on `observations`; returns the pre-step loss.
    pub fn update(&mut self, observations: &[Vec<f64>]) -> Result<f64> {
        let (loss, grads) = self.predictor_loss(observations)?;
        self.optimizer.step(&mut self.predictor, &grads)?;
        Ok(loss)
    }
}

/// `extrinsic + intrinsic_coef * intrinsic`.
pub fn combined_reward(extrinsic: f64, intrinsic: f64, intrinsic_coef: f64) -> f64 {
    extrinsic + intrinsic_coef * intrinsic
}
