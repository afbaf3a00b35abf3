use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferMode {
    /// Single best trajectory; replaced only by a strictly higher return.
    Match,
    /// Top-`L` returns above the admission threshold; the oldest of the tied minima is
    /// evicted first.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub trajectory: Trajectory,
    pub episode_return: f64,
    /// Position in the sequence of accepted offers; orders entries by age.
    pub insertion_index: u64,
}

/// Capacity-bounded store of the highest-return trajectories seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationBuffer {
    mode: BufferMode,
    capacity: usize,
    /// `-inf` admits everything; stored as `null` since JSON has no infinities.
    #[serde(with = "open_threshold")]
    reward_threshold: f64,
    /// Insertion order, oldest first.
    entries: Vec<BufferEntry>,
    next_index: u64,
}

mod open_threshold {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl ImitationBuffer {
    pub fn new(mode: BufferMode, capacity: usize, reward_threshold: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("imitation buffer capacity must be at least 1".into()));
        }
        if mode == BufferMode::Match && capacity != 1 {
            return Err(Error::Config(format!("a MATCH buffer holds exactly one trajectory, got capacity {capacity}")));
        }
        if reward_threshold.is_nan() || reward_threshold == f64::INFINITY {
            return Err(Error::Config(format!("reward threshold must be finite or -inf, got {reward_threshold}")));
        }
        Ok(Self {
            mode,
            capacity,
            reward_threshold,
            entries: Vec::new(),
            next_index: 0,
        })
    }

    pub fn matching() -> Self {
        Self::new(BufferMode::Match, 1, f64::NEG_INFINITY).expect("valid MATCH buffer")
    }

    pub fn replay(capacity: usize, reward_threshold: f64) -> Result<Self> {
        Self::new(BufferMode::Replay, capacity, reward_threshold)
    }

    pub fn mode(&self) -> BufferMode {
        self.mode
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn reward_threshold(&self) -> f64 {
        self.reward_threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order, oldest first.
    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    /// Entries by descending return, newer first among ties.
    pub fn ranked(&self) -> Vec<&BufferEntry> {
        let mut v: Vec<&BufferEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            b.episode_return
                .total_cmp(&a.episode_return)
                .then(b.insertion_index.cmp(&a.insertion_index))
        });
        v
    }

    /// Highest-return entry (the earliest among ties).
    pub fn best(&self) -> Option<&BufferEntry> {
        self.entries
            .iter()
            .reduce(|best, e| if e.episode_return > best.episode_return { e } else { best })
    }

    pub fn best_return(&self) -> Option<f64> {
        self.best().map(|e| e.episode_return)
    }

    pub fn min_return(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.episode_return).reduce(f64::min)
    }

    /// Offers a trajectory, keyed by its (extrinsic) `episode_return`. Returns whether it
    /// was stored.
    pub fn offer(&mut self, traj: &Trajectory) -> bool {
        let ret = traj.episode_return;
        if ret.is_nan() {
            return false;
        }
        match self.mode {
            BufferMode::Match => {
                if self.best_return().is_some_and(|best| ret <= best) {
                    return false;
                }
                self.entries.clear();
            }
            BufferMode::Replay => {
                if ret <= self.reward_threshold {
                    return false;
                }
                if self.entries.len() == self.capacity {
                    let min = self.min_return().expect("full buffer is nonempty");
                    if ret <= min {
                        return false;
                    }
                    // Entries are oldest-first, so the first minimum is the oldest one.
                    let pos = self
                        .entries
                        .iter()
                        .position(|e| e.episode_return == min)
                        .expect("minimum is attained");
                    self.entries.remove(pos);
                }
            }
        }
        self.entries.push(BufferEntry {
            trajectory: traj.clone(),
            episode_return: ret,
            insertion_index: self.next_index,
        });
        self.next_index += 1;
        true
    }

    /// Uniformly drawn stored trajectory.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Trajectory> {
        if self.entries.is_empty() {
            None
        } else {
            Some(&self.entries[rng.gen_range(0..self.entries.len())].trajectory)
        }
    }
}
