use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::nn::Matrix;

static ZERO_NORM_WARNED: AtomicBool = AtomicBool::new(false);

/// Cosine distance `1 - a·b / (|a||b|)`, in `[0, 2]`.
///
/// A zero-norm vector has no direction; it is given the neutral cost 1 against anything.
pub fn cosine_cost(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        if !ZERO_NORM_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("zero-norm state in cosine cost; using neutral cost 1.0");
        }
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
}

/// Pairwise cosine costs between the current rollout states (rows) and the
/// imitation-buffer states (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    /// Wraps a precomputed cost matrix. Entries must be finite and nonnegative.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::Shape("cost matrix must be nonempty".into()));
        }
        if m.as_slice().iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Numeric("cost matrix entries must be finite and nonnegative".into()));
        }
        Ok(Self(m))
    }

    pub fn build(current_states: &[Vec<f64>], buffer_states: &[Vec<f64>]) -> Result<Self> {
        if current_states.is_empty() || buffer_states.is_empty() {
            return Err(Error::Shape(format!(
                "cost matrix needs nonempty state lists, got {} current and {} buffer states",
                current_states.len(),
                buffer_states.len()
            )));
        }
        let dim = current_states[0].len();
        if let Some(bad) = current_states.iter().chain(buffer_states).find(|s| s.len() != dim) {
            return Err(Error::Shape(format!(
                "state dimension {} differs from {dim}",
                bad.len()
            )));
        }
        Ok(Self(Matrix::from_fn(current_states.len(), buffer_states.len(), |r, c| {
            cosine_cost(&current_states[r], &buffer_states[c])
        })))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0.get(r, c)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Per-dimension mean and standard deviation over `states`.
pub fn state_moments(states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = states.first().map_or(0, Vec::len);
    let n = states.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for s in states {
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x / n);
    }
    let mut var = vec![0.0; dim];
    for s in states {
        var.iter_mut()
            .zip(s.iter().zip(&mean))
            .for_each(|(v, (x, m))| *v += (x - m) * (x - m) / n);
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Standardizes `states` with the given moments. Constant dimensions map to 0.
pub fn standardize(states: &[Vec<f64>], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|s| {
            s.iter()
                .zip(mean.iter().zip(std))
                .map(|(x, (m, sd))| if *sd > 1e-8 { (x - m) / sd } else { 0.0 })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_cost_reference_points() {
        assert!(cosine_cost(&[1.0, 2.0], &[1.0, 2.0]).abs() < 1e-15);
        assert!((cosine_cost(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((cosine_cost(&[1.0, -2.0], &[-1.0, 2.0]) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_cost(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn small_matrices() {
        let c = CostMatrix::build(&[vec![0.3, 0.4]], &[vec![0.3, 0.4]]).unwrap();
        assert!(c.get(0, 0).abs() < 1e-15);

        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = CostMatrix::build(&e, &e).unwrap();
        assert_eq!((c.get(0, 0), c.get(0, 1), c.get(1, 0), c.get(1, 1)), (0.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let (xs, ys) = (draw(3), draw(4));
        let c = CostMatrix::build(&xs, &ys).unwrap();
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!((c.get(i, j) - (1.0 - dot / (nx * ny))).abs() < 1e-12);
                assert!((-1e-12..=2.0 + 1e-12).contains(&c.get(i, j)));
            }
        }
    }

    #[test]
    fn empty_lists_are_rejected() {
        assert!(CostMatrix::build(&[], &[vec![1.0]]).is_err());
        assert!(CostMatrix::build(&[vec![1.0]], &[]).is_err());
    }

    #[test]
    fn standardization_zeroes_constant_dimensions() {
        let states = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let (m, s) = state_moments(&states);
        assert_eq!(m, vec![2.0, 5.0]);
        assert_eq!(s, vec![1.0, 0.0]);
        let z = standardize(&states, &m, &s);
        assert_eq!(z, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }
}
