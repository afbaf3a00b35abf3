use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::{Action, ActionSpace, EnvSpec, EnvStep, Environment};

pub const POINT_HORIZON: usize = 200;

/// A damped point mass steered toward a per-episode target on `[-1, 1]^2`.
///
/// Observation: `[position, velocity, target]`. Reward: `-|p - target| - 0.01 |a|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensePointEnv {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub target: [f64; 2],
    pub horizon: usize,
    t: usize,
}

impl Default for DensePointEnv {
    fn default() -> Self {
        Self::new(POINT_HORIZON)
    }
}

impl DensePointEnv {
    pub fn new(horizon: usize) -> Self {
        Self {
            position: [0.0; 2],
            velocity: [0.0; 2],
            target: [0.0; 2],
            horizon,
            t: 0,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        [self.position, self.velocity, self.target].concat()
    }
}

impl Environment for DensePointEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 6,
            action_space: ActionSpace::Continuous {
                dim: 2,
                low: -1.0,
                high: 1.0,
            },
            max_episode_steps: self.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        self.target = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        self.velocity = [0.0; 2];
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let a = match action {
            Action::Continuous(a) if a.len() == 2 && a.iter().all(|v| v.is_finite()) => {
                [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)]
            }
            other => return Err(Error::Env(format!("point env expects a finite 2-d continuous action, got {other:?}"))),
        };
        for k in 0..2 {
            self.velocity[k] = (0.9 * self.velocity[k] + 0.1 * a[k]).clamp(-1.0, 1.0);
            self.position[k] = (self.position[k] + 0.05 * self.velocity[k]).clamp(-1.0, 1.0);
        }
        self.t += 1;
        let dist = (self.position[0] - self.target[0]).hypot(self.position[1] - self.target[1]);
        let reward = -dist - 0.01 * (a[0] * a[0] + a[1] * a[1]);
        Ok(EnvStep {
            observation: self.observation(),
            reward,
            done: false,
            truncated: self.t >= self.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let mut a = DensePointEnv::default();
        let mut b = DensePointEnv::default();
        assert_eq!(a.reset(7), b.reset(7));
        assert_ne!(a.reset(7), a.reset(8));
    }

    #[test]
    fn on_target_with_zero_action_pays_zero() {
        let mut env = DensePointEnv::default();
        env.reset(0);
        env.position = env.target;
        let step = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(step.reward, 0.0);
    }

    #[test]
    fn dynamics_and_truncation() {
        let mut env = DensePointEnv::new(3);
        env.reset(1);
        env.position = [0.0, 0.0];
        env.step(&Action::Continuous(vec![5.0, -1.0])).unwrap();
        assert!((env.velocity[0] - 0.1).abs() < 1e-15 && (env.velocity[1] + 0.1).abs() < 1e-15);
        assert!((env.position[0] - 0.005).abs() < 1e-15);
        assert!(!env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap().truncated);
        assert!(env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap().truncated);
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = DensePointEnv::default();
        env.reset(0);
        assert!(env.step(&Action::Discrete(0)).is_err());
        assert!(env.step(&Action::Continuous(vec![f64::NAN, 0.0])).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }
}
