use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::{Action, ActionSpace, EnvSpec, EnvStep, Environment};

/// Short enough that a uniformly random policy reaches the built-in goals only about one
/// episode in six (28% for the near goal, 6% for the far one).
pub const MAZE_HORIZON: usize = 100;
pub const MASK_SENTINEL: f64 = -1.0;
pub const VISIBILITY_RADIUS: usize = 2;
pub const FRAME_STACK: usize = 4;

/// Built-in layout: a serpentine corridor with goal candidates at increasing depth.
pub const DEFAULT_LAYOUT: &str = "\
#######
#S....#
#####.#
#G....#
#.#####
#...G.#
#######
";

pub type Cell = (usize, usize);

/// Moves in action order: up, right, down, left (`y` grows downward).
const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// A walls-and-cells grid with goal and start candidates.
///
/// Text format, one character per cell: `#` wall, `.` free, `G` goal candidate,
/// `S` start candidate. Rows must have equal width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeLayout {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    goals: Vec<Cell>,
    starts: Vec<Cell>,
}

impl FromStr for MazeLayout {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(Error::format("maze layout", "empty layout"));
        }
        let mut walls = Vec::with_capacity(width * height);
        let (mut goals, mut starts) = (Vec::new(), Vec::new());
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::format("maze layout", format!("row {y} has width {}, expected {width}", row.chars().count())));
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'G' => {
                        walls.push(false);
                        goals.push((x, y));
                    }
                    'S' => {
                        walls.push(false);
                        starts.push((x, y));
                    }
                    other => return Err(Error::format("maze layout", format!("unknown cell {other:?} at row {y}, column {x}"))),
                }
            }
        }
        if goals.is_empty() || starts.is_empty() {
            return Err(Error::format("maze layout", "layout needs at least one `G` and one `S`"));
        }
        Ok(Self {
            width,
            height,
            walls,
            goals,
            starts,
        })
    }
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                let ch = if self.is_wall((x, y)) {
                    '#'
                } else if self.goals.contains(&(x, y)) {
                    'G'
                } else if self.starts.contains(&(x, y)) {
                    'S'
                } else {
                    '.'
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Default for MazeLayout {
    fn default() -> Self {
        DEFAULT_LAYOUT.parse().expect("built-in layout parses")
    }
}

impl MazeLayout {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goals(&self) -> &[Cell] {
        &self.goals
    }

    pub fn starts(&self) -> &[Cell] {
        &self.starts
    }

    /// Out-of-grid cells count as walls.
    pub fn is_wall(&self, (x, y): Cell) -> bool {
        x >= self.width || y >= self.height || self.walls[y * self.width + x]
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&c| !self.is_wall(c))
            .collect()
    }

    /// Cell reached by taking move `action` from `cell`; walls leave the agent in place.
    pub fn next_cell(&self, (x, y): Cell, action: usize) -> Cell {
        let (dx, dy) = MOVES[action];
        match (x.checked_add_signed(dx), y.checked_add_signed(dy)) {
            (Some(nx), Some(ny)) if !self.is_wall((nx, ny)) => (nx, ny),
            _ => (x, y),
        }
    }

    /// Breadth-first shortest path length in moves.
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Option<usize> {
        if self.is_wall(from) || self.is_wall(to) {
            return None;
        }
        let mut dist = vec![usize::MAX; self.width * self.height];
        let mut queue = VecDeque::from([from]);
        dist[from.1 * self.width + from.0] = 0;
        while let Some(c) = queue.pop_front() {
            let d = dist[c.1 * self.width + c.0];
            if c == to {
                return Some(d);
            }
            for a in 0..MOVES.len() {
                let n = self.next_cell(c, a);
                let slot = &mut dist[n.1 * self.width + n.0];
                if *slot == usize::MAX {
                    *slot = d + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    fn normalize(&self, (x, y): Cell) -> [f64; 2] {
        let sx = (self.width - 1).max(1) as f64;
        let sy = (self.height - 1).max(1) as f64;
        [x as f64 / sx, y as f64 / sy]
    }
}

/// Reachability of the goal within the horizon from a given reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalReturn {
    /// 1 if the goal can be reached within the horizon, else 0.
    pub value: f64,
    pub path_length: Option<usize>,
}

/// Grid navigation to one goal, drawn per episode from the layout's goal set, with a
/// reward of 1 on arrival.
///
/// Observation: normalized agent `(x, y)` then goal `(x, y)`. Starts are drawn from the
/// `S` cells, or from every free non-goal cell when `random_start` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMazeEnv {
    layout: MazeLayout,
    random_start: bool,
    horizon: usize,
    agent: Cell,
    goal: Cell,
    t: usize,
}

impl Default for SparseMazeEnv {
    fn default() -> Self {
        Self::new(MazeLayout::default(), false, MAZE_HORIZON).expect("built-in layout is valid")
    }
}

impl SparseMazeEnv {
    /// Checks that every goal is reachable from every possible start.
    pub fn new(layout: MazeLayout, random_start: bool, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("maze horizon must be at least 1".into()));
        }
        let starts = if random_start { layout.free_cells() } else { layout.starts.clone() };
        for &g in &layout.goals {
            for &s in &starts {
                if layout.shortest_path(s, g).is_none() {
                    return Err(Error::Config(format!("maze goal {g:?} is unreachable from start {s:?}")));
                }
            }
        }
        let (agent, goal) = (layout.starts[0], layout.goals[0]);
        Ok(Self {
            layout,
            random_start,
            horizon,
            agent,
            goal,
            t: 0,
        })
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Places the agent directly; used by probes and tests.
    pub fn set_agent(&mut self, cell: Cell) -> Result<()> {
        if self.layout.is_wall(cell) {
            return Err(Error::Env(format!("cannot place the agent inside wall {cell:?}")));
        }
        self.agent = cell;
        Ok(())
    }

    pub fn observation(&self) -> Vec<f64> {
        [self.layout.normalize(self.agent), self.layout.normalize(self.goal)].concat()
    }

    /// Observation for an arbitrary agent/goal placement.
    pub fn observation_at(&self, agent: Cell, goal: Cell) -> Vec<f64> {
        [self.layout.normalize(agent), self.layout.normalize(goal)].concat()
    }

    /// Start and goal cells that `reset(seed)` would produce.
    pub fn episode_cells(&self, seed: u64) -> (Cell, Cell) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = *self.layout.goals.choose(&mut rng).expect("layout has goals");
        let pool: Vec<Cell> = if self.random_start {
            self.layout.free_cells()
        } else {
            self.layout.starts.clone()
        };
        let pool: Vec<Cell> = match pool.iter().copied().filter(|&c| c != goal).collect::<Vec<_>>() {
            p if p.is_empty() => pool,
            p => p,
        };
        (*pool.choose(&mut rng).expect("start pool is nonempty"), goal)
    }

    pub fn optimal_return(&self, seed: u64) -> OptimalReturn {
        let (start, goal) = self.episode_cells(seed);
        let path_length = self.layout.shortest_path(start, goal);
        let value = if path_length.is_some_and(|d| d <= self.horizon) { 1.0 } else { 0.0 };
        OptimalReturn { value, path_length }
    }

    fn advance(&mut self, action: &Action) -> Result<(f64, bool, bool)> {
        let a = match action {
            Action::Discrete(a) if *a < MOVES.len() => *a,
            other => return Err(Error::Env(format!("maze expects a discrete action in 0..4, got {other:?}"))),
        };
        self.agent = self.layout.next_cell(self.agent, a);
        self.t += 1;
        let done = self.agent == self.goal;
        let reward = if done { 1.0 } else { 0.0 };
        Ok((reward, done, !done && self.t >= self.horizon))
    }
}

impl Environment for SparseMazeEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 4,
            action_space: ActionSpace::Discrete(MOVES.len()),
            max_episode_steps: self.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let (agent, goal) = self.episode_cells(seed);
        self.agent = agent;
        self.goal = goal;
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let (reward, done, truncated) = self.advance(action)?;
        Ok(EnvStep {
            observation: self.observation(),
            reward,
            done,
            truncated,
        })
    }
}

/// [`SparseMazeEnv`] whose goal coordinates read `(-1, -1)` unless the goal lies within
/// Chebyshev distance 2 of the agent, with the last four frames stacked oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMazeEnv {
    inner: SparseMazeEnv,
    frames: VecDeque<Vec<f64>>,
}

impl Default for MaskedMazeEnv {
    fn default() -> Self {
        Self::new(SparseMazeEnv::default())
    }
}

impl MaskedMazeEnv {
    pub fn new(inner: SparseMazeEnv) -> Self {
        Self {
            inner,
            frames: VecDeque::with_capacity(FRAME_STACK),
        }
    }

    pub fn inner(&self) -> &SparseMazeEnv {
        &self.inner
    }

    pub fn frame(&self) -> Vec<f64> {
        masked_frame(&self.inner, self.inner.agent, self.inner.goal)
    }

    fn stacked(&self) -> Vec<f64> {
        self.frames.iter().flatten().copied().collect()
    }

    pub fn optimal_return(&self, seed: u64) -> OptimalReturn {
        self.inner.optimal_return(seed)
    }
}

fn masked_frame(env: &SparseMazeEnv, agent: Cell, goal: Cell) -> Vec<f64> {
    let cheb = agent.0.abs_diff(goal.0).max(agent.1.abs_diff(goal.1));
    let mut obs = env.observation_at(agent, goal);
    if cheb > VISIBILITY_RADIUS {
        obs[2] = MASK_SENTINEL;
        obs[3] = MASK_SENTINEL;
    }
    obs
}

impl Environment for MaskedMazeEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 4 * FRAME_STACK,
            ..self.inner.spec()
        }
    }

    /// The stack starts filled with copies of the first frame.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed);
        let first = self.frame();
        self.frames = std::iter::repeat_n(first, FRAME_STACK).collect();
        self.stacked()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let (reward, done, truncated) = self.inner.advance(action)?;
        self.frames.pop_front();
        self.frames.push_back(self.frame());
        Ok(EnvStep {
            observation: self.stacked(),
            reward,
            done,
            truncated,
        })
    }
}
