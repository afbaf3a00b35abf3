use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[low, high]^dim`.
    Continuous { dim: usize, low: f64, high: f64 },
}

/// Static descriptors of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Reached a terminal state; no bootstrapping past this step.
    pub done: bool,
    /// Cut by the time limit.
    pub truncated: bool,
}

/// Episodic environment with seeded resets.
pub trait Environment {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. Identical seeds produce identical episodes under identical actions.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<EnvStep>;
}
