use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ImitationBuffer;
use crate::error::{Error, Result};
use crate::rl::{collect_episode, trajectory_advantages, AdvantageBatch, Environment, PolicyParams, SampleMode, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectorySource {
    Imitation,
    Exploration,
}

/// Whether the next data-buffer slot replays a stored trajectory: `true` with probability
/// `xi` when the buffer is nonempty. The coin is only drawn when the outcome is uncertain.
pub fn replay_coin<R: Rng + ?Sized>(buffer: &ImitationBuffer, xi: f64, rng: &mut R) -> Result<TrajectorySource> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Config(format!("xi must lie in [0, 1], got {xi}")));
    }
    let imitate = !buffer.is_empty() && xi > 0.0 && (xi >= 1.0 || rng.gen_bool(xi));
    Ok(if imitate {
        TrajectorySource::Imitation
    } else {
        TrajectorySource::Exploration
    })
}

/// Picks the source of the next trajectory and produces it: a uniformly drawn buffer
/// entry, or a fresh episode of `params` in `env` started from `episode_seed`.
///
/// The coin and the buffer draw use `source_rng`; action sampling uses `policy_rng`.
pub fn replay_select<E, R, S>(
    buffer: &ImitationBuffer,
    params: &PolicyParams,
    env: &mut E,
    episode_seed: u64,
    xi: f64,
    source_rng: &mut S,
    policy_rng: &mut R,
) -> Result<(Trajectory, TrajectorySource)>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
    S: Rng + ?Sized,
{
    match replay_coin(buffer, xi, source_rng)? {
        TrajectorySource::Imitation => {
            let traj = buffer.sample(source_rng).expect("coin only favors a nonempty buffer");
            Ok((traj.clone(), TrajectorySource::Imitation))
        }
        TrajectorySource::Exploration => {
            let traj = collect_episode(env, episode_seed, params, SampleMode::Stochastic, policy_rng)?;
            Ok((traj, TrajectorySource::Exploration))
        }
    }
}

/// A trajectory re-scored under the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrajectory {
    /// Current-policy log-probabilities of the stored actions; the PPO ratio starts at 1.
    pub log_probs: Vec<f64>,
    /// Current critic's values of the stored observations.
    pub values: Vec<f64>,
    pub advantages: AdvantageBatch,
}

/// Recomputes values, advantages, and "old" log-probabilities of `traj` under `params`, as
/// if it had just been collected. `rewards` overrides the stored extrinsic rewards (used
/// when an intrinsic bonus is mixed in).
pub fn replay_prepare_batch(
    traj: &Trajectory,
    params: &PolicyParams,
    rewards: Option<&[f64]>,
    gamma: f64,
    lam: f64,
) -> Result<PreparedTrajectory> {
    if traj.is_empty() {
        return Err(Error::Shape("cannot prepare an empty trajectory".into()));
    }
    let mut log_probs = Vec::with_capacity(traj.len());
    let mut values = Vec::with_capacity(traj.len());
    for (obs, action) in traj.observations.iter().zip(&traj.actions) {
        let out = params.evaluate(obs)?;
        log_probs.push(out.dist.log_prob(action)?);
        values.push(out.value);
    }
    let last_value = traj.bootstrap_value(params)?;
    let rewards = rewards.unwrap_or(&traj.rewards);
    let advantages = trajectory_advantages(traj, rewards, &values, last_value, gamma, lam)?;
    Ok(PreparedTrajectory {
        log_probs,
        values,
        advantages,
    })
}
