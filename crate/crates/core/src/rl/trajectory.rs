use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gae, Action, AdvantageBatch, Environment, PolicyParams, SampleMode};
use crate::error::{Error, Result};

/// A contiguous run of environment steps under one collecting policy.
///
/// A trajectory is either a whole episode or a segment of one (when a fixed-size rollout
/// cuts an episode). `rewards` are always the raw extrinsic rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Undiscounted sum of `rewards`.
    pub episode_return: f64,
    /// Ended in a terminal state.
    pub terminated: bool,
    /// Ended by the environment's time limit.
    pub truncated: bool,
    /// Observation after the last step.
    pub final_observation: Vec<f64>,
}

impl Trajectory {
    pub fn new(first_obs_dim: usize) -> Self {
        Self {
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            episode_return: 0.0,
            terminated: false,
            truncated: false,
            final_observation: vec![0.0; first_obs_dim],
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Whether the trajectory reached the end of its episode.
    pub fn is_complete(&self) -> bool {
        self.terminated || self.truncated
    }

    /// Appends `other`, which must continue this trajectory's episode.
    pub fn extend(&mut self, other: Trajectory) {
        self.observations.extend(other.observations);
        self.actions.extend(other.actions);
        self.rewards.extend(other.rewards);
        self.log_probs.extend(other.log_probs);
        self.values.extend(other.values);
        self.episode_return += other.episode_return;
        self.terminated = other.terminated;
        self.truncated = other.truncated;
        self.final_observation = other.final_observation;
    }

    /// Value to bootstrap from after the last step under `params`: 0 after a terminal
    /// state, the critic's estimate of the final observation otherwise.
    pub fn bootstrap_value(&self, params: &PolicyParams) -> Result<f64> {
        if self.terminated {
            Ok(0.0)
        } else {
            params.value(&self.final_observation)
        }
    }
}

/// GAE over one trajectory with the given per-step `rewards` and `values`; only a terminal
/// last step blocks the bootstrap from `last_value`.
pub fn trajectory_advantages(
    traj: &Trajectory,
    rewards: &[f64],
    values: &[f64],
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<AdvantageBatch> {
    let mut dones = vec![false; traj.len()];
    if let Some(last) = dones.last_mut() {
        *last = traj.terminated;
    }
    gae(rewards, values, last_value, &dones, gamma, lam)
}

/// Runs `params` in `env` starting from `start_obs` until the episode terminates, is
/// truncated, or `max_steps` steps have been taken. Log-probabilities and values of the
/// collecting policy are cached per step.
pub fn collect_trajectory<E, R>(
    env: &mut E,
    start_obs: Vec<f64>,
    params: &PolicyParams,
    max_steps: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    if max_steps == 0 {
        return Err(Error::Config("collect_trajectory needs max_steps >= 1".into()));
    }
    let mut traj = Trajectory::new(start_obs.len());
    let mut obs = start_obs;
    for t in 0..max_steps {
        let out = params.evaluate(&obs)?;
        let action = out.dist.sample(mode, rng);
        let log_prob = out.dist.log_prob(&action)?;
        let step = env
            .step(&action)
            .map_err(|e| Error::Env(format!("step {t} of trajectory failed: {e}")))?;
        if !step.reward.is_finite() {
            return Err(Error::Env(format!("non-finite reward {} at step {t}", step.reward)));
        }
        traj.observations.push(std::mem::replace(&mut obs, step.observation));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.log_probs.push(log_prob);
        traj.values.push(out.value);
        traj.episode_return += step.reward;
        if step.done || step.truncated {
            traj.terminated = step.done;
            traj.truncated = step.truncated && !step.done;
            break;
        }
    }
    traj.final_observation = obs;
    Ok(traj)
}

/// Resets `env` with `seed` and runs one full episode.
pub fn collect_episode<E, R>(env: &mut E, seed: u64, params: &PolicyParams, mode: SampleMode, rng: &mut R) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let obs = env.reset(seed);
    collect_trajectory(env, obs, params, usize::MAX, mode, rng)
}
