//! Built-in environments: a dense-reward point mass, a sparse multi-goal grid maze, and a
//! partially observed, frame-stacked variant of the maze.

mod maze;
mod point;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use maze::{
    Cell, MaskedMazeEnv, MazeLayout, OptimalReturn, SparseMazeEnv, DEFAULT_LAYOUT, FRAME_STACK, MASK_SENTINEL,
    MAZE_HORIZON, VISIBILITY_RADIUS,
};
pub use point::{DensePointEnv, POINT_HORIZON};

use crate::error::{Error, Result};
use crate::rl::{Action, EnvSpec, EnvStep, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvId {
    DensePoint,
    SparseMaze,
    MaskedMaze,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::DensePoint, EnvId::SparseMaze, EnvId::MaskedMaze];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::DensePoint => "dense-point",
            EnvId::SparseMaze => "sparse-maze",
            EnvId::MaskedMaze => "masked-maze",
        }
    }

    pub fn is_sparse(self) -> bool {
        self != EnvId::DensePoint
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown env {s:?}; expected one of dense-point, sparse-maze, masked-maze")))
    }
}

/// Construction options shared by the registry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvOptions {
    /// Maze layout text; `None` uses the built-in layout.
    pub layout: Option<String>,
    pub random_start: bool,
    /// `None` uses the environment's default horizon.
    pub horizon: Option<usize>,
}

/// Any built-in environment, owned by value so it can be checkpointed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvInstance {
    DensePoint(DensePointEnv),
    SparseMaze(SparseMazeEnv),
    MaskedMaze(MaskedMazeEnv),
}

impl EnvInstance {
    pub fn build(id: EnvId, options: &EnvOptions) -> Result<Self> {
        let maze = || -> Result<SparseMazeEnv> {
            let layout = match &options.layout {
                Some(text) => text.parse()?,
                None => MazeLayout::default(),
            };
            SparseMazeEnv::new(layout, options.random_start, options.horizon.unwrap_or(MAZE_HORIZON))
        };
        Ok(match id {
            EnvId::DensePoint => EnvInstance::DensePoint(DensePointEnv::new(options.horizon.unwrap_or(POINT_HORIZON))),
            EnvId::SparseMaze => EnvInstance::SparseMaze(maze()?),
            EnvId::MaskedMaze => EnvInstance::MaskedMaze(MaskedMazeEnv::new(maze()?)),
        })
    }

    pub fn id(&self) -> EnvId {
        match self {
            EnvInstance::DensePoint(_) => EnvId::DensePoint,
            EnvInstance::SparseMaze(_) => EnvId::SparseMaze,
            EnvInstance::MaskedMaze(_) => EnvId::MaskedMaze,
        }
    }

    /// BFS reachability oracle for maze resets; `None` for the point env.
    pub fn optimal_return(&self, seed: u64) -> Option<OptimalReturn> {
        match self {
            EnvInstance::DensePoint(_) => None,
            EnvInstance::SparseMaze(e) => Some(e.optimal_return(seed)),
            EnvInstance::MaskedMaze(e) => Some(e.optimal_return(seed)),
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            EnvInstance::DensePoint(e) => e,
            EnvInstance::SparseMaze(e) => e,
            EnvInstance::MaskedMaze(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            EnvInstance::DensePoint(e) => e,
            EnvInstance::SparseMaze(e) => e,
            EnvInstance::MaskedMaze(e) => e,
        }
    }
}

impl Environment for EnvInstance {
    fn spec(&self) -> EnvSpec {
        self.inner().spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner_mut().reset(seed)
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        self.inner_mut().step(action)
    }
}
