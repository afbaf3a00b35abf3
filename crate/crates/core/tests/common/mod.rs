//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use sipp::nn::ParamSet;

/// Exact optimal transport cost between uniform measures on the rows and columns of `cost`,
/// as a min-cost flow: row `i` supplies `m` units, column `j` absorbs `n` units, every unit
/// on arc `(i, j)` costs `cost[i][j] / (n m)`. Successive shortest paths with Bellman-Ford.
pub fn exact_transport_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost[0].len();
    let (src, sink) = (n + m, n + m + 1);
    let nodes = n + m + 2;
    // (to, residual capacity, unit cost, index of the reverse arc)
    let mut arcs: Vec<Vec<(usize, i64, f64, usize)>> = vec![Vec::new(); nodes];
    let add = |arcs: &mut Vec<Vec<(usize, i64, f64, usize)>>, a: usize, b: usize, cap: i64, c: f64| {
        let (ra, rb) = (arcs[b].len(), arcs[a].len());
        arcs[a].push((b, cap, c, ra));
        arcs[b].push((a, 0, -c, rb));
    };
    let big = (n * m) as i64;
    for i in 0..n {
        add(&mut arcs, src, i, m as i64, 0.0);
        for j in 0..m {
            add(&mut arcs, i, n + j, big, cost[i][j]);
        }
    }
    for j in 0..m {
        add(&mut arcs, n + j, sink, n as i64, 0.0);
    }

    let mut remaining = big;
    let mut total = 0.0;
    while remaining > 0 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for (k, &(v, cap, c, _)) in arcs[u].iter().enumerate() {
                    if cap > 0 && dist[u] + c < dist[v] - 1e-15 {
                        dist[v] = dist[u] + c;
                        prev[v] = Some((u, k));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        assert!(dist[sink].is_finite(), "flow network lost feasibility");
        let mut push = remaining;
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            push = push.min(arcs[u][k].1);
            v = u;
        }
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            let rev = arcs[u][k].3;
            arcs[u][k].1 -= push;
            arcs[v][rev].1 += push;
            total += push as f64 * arcs[u][k].2;
            v = u;
        }
        remaining -= push;
    }
    total / (n * m) as f64
}

/// `A_t = sum_{k >= t} (gamma lam)^(k - t) delta_k`, summed term by term and stopped after
/// the first terminal step.
pub fn gae_oracle(rewards: &[f64], values: &[f64], last_value: f64, dones: &[bool], gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let value_after = |k: usize| if k + 1 < n { values[k + 1] } else { last_value };
    let delta = |k: usize| {
        let next = if dones[k] { 0.0 } else { value_after(k) };
        rewards[k] + gamma * next - values[k]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..n {
                sum += (gamma * lam).powi((k - t) as i32) * delta(k);
                if dones[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// Buffer model: each entry is `(return, tag)`. Contents are recomputed by sorting and
/// truncating rather than by locating the entry to evict.
#[derive(Debug, Clone, Default)]
pub struct BufferOracle {
    pub entries: Vec<(f64, usize, u64)>, // (return, tag, admission order)
    admitted: u64,
}

impl BufferOracle {
    /// Single slot: the first-seen maximum.
    pub fn offer_match(&mut self, ret: f64, tag: usize) {
        let mut all = self.entries.clone();
        all.push((ret, tag, self.admitted));
        self.admitted += 1;
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
        all.truncate(1);
        self.entries = all;
    }

    /// Top `capacity` by return; a newcomer must beat the current minimum of a full
    /// buffer, and among tied minima the oldest is dropped.
    pub fn offer_replay(&mut self, ret: f64, tag: usize, capacity: usize, threshold: f64) {
        if ret <= threshold {
            return;
        }
        let full = self.entries.len() == capacity;
        if full && self.entries.iter().all(|e| ret <= e.0) {
            return;
        }
        let mut all = self.entries.clone();
        all.push((ret, tag, self.admitted));
        self.admitted += 1;
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.2.cmp(&a.2)));
        all.truncate(capacity);
        self.entries = all;
    }

    pub fn tags(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.entries.iter().map(|e| e.1).collect();
        t.sort_unstable();
        t
    }
}

/// Shortest move count on a text grid (`#` blocks; everything else is open), computed on
/// the characters directly.
pub fn bfs_oracle(grid: &[Vec<char>], from: (usize, usize), to: (usize, usize)) -> Option<usize> {
    let h = grid.len() as i64;
    let w = grid[0].len() as i64;
    let open = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && grid[y as usize][x as usize] != '#';
    if !open(from.0 as i64, from.1 as i64) || !open(to.0 as i64, to.1 as i64) {
        return None;
    }
    let mut seen = vec![vec![false; w as usize]; h as usize];
    let mut q = VecDeque::from([(from.0 as i64, from.1 as i64, 0usize)]);
    seen[from.1][from.0] = true;
    while let Some((x, y, d)) = q.pop_front() {
        if (x as usize, y as usize) == to {
            return Some(d);
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if open(nx, ny) && !seen[ny as usize][nx as usize] {
                seen[ny as usize][nx as usize] = true;
                q.push_back((nx, ny, d + 1));
            }
        }
    }
    None
}

/// Random grid with a wall border, at least one `S` and one `G`.
pub fn random_grid<R: Rng>(rng: &mut R) -> Vec<Vec<char>> {
    let (w, h) = (rng.gen_range(4..10), rng.gen_range(4..10));
    let mut g: Vec<Vec<char>> = (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    if x == 0 || y == 0 || x == w - 1 || y == h - 1 || rng.gen_bool(0.3) {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect()
        })
        .collect();
    let interior: Vec<(usize, usize)> = (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| (x, y))).collect();
    let s = interior[rng.gen_range(0..interior.len())];
    let gl = loop {
        let c = interior[rng.gen_range(0..interior.len())];
        if c != s {
            break c;
        }
    };
    g[s.1][s.0] = 'S';
    g[gl.1][gl.0] = 'G';
    g
}

/// Max over entries of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` with respect to every parameter of `params`.
pub fn finite_differences<P: ParamSet + Clone>(params: &P, step: f64, mut f: impl FnMut(&P) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.num_params());
    let mut work = params.clone();
    let lens: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    for (si, &len) in lens.iter().enumerate() {
        for k in 0..len {
            let orig = work.slices()[si][k];
            work.slices_mut()[si][k] = orig + step;
            let up = f(&work);
            work.slices_mut()[si][k] = orig - step;
            let down = f(&work);
            work.slices_mut()[si][k] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    out
}
