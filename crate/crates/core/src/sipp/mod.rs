//! Self-imitation on top of PPO: the imitation buffer, OT-prioritized minibatch sampling
//! (MATCH), and trajectory replay (REPLAY).

mod buffer;
mod matching;
mod replay;

pub use buffer::{BufferEntry, BufferMode, ImitationBuffer};
pub use matching::{match_weights, MatchSampler, MatchWeights};
pub use replay::{replay_coin, replay_prepare_batch, replay_select, PreparedTrajectory, TrajectorySource};
