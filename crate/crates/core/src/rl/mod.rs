//! Environment contract, trajectory collection, advantage estimation, and the PPO update.

mod env;
mod gae;
mod policy;
mod ppo;
mod trajectory;

pub use env::{Action, ActionSpace, EnvSpec, EnvStep, Environment};
pub use gae::{gae, normalize_advantages, AdvantageBatch};
pub use policy::{ActionDist, PolicyGrads, PolicyOutput, PolicyParams, SampleMode, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{
    ppo_loss, uniform_partition, BatchSampler, LOG_RATIO_LIMIT, BatchSource, Learner, LossCoefs, LossOutput, LossSample, Minibatch,
    RatioBaseline, TrainingBatch, UniformSampler, UpdateConfig, UpdateStats,
};
pub use trajectory::{collect_episode, collect_trajectory, trajectory_advantages, Trajectory};
