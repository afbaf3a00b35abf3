use super::{CostMatrix, TransportPlan};
use crate::error::{Error, Result};

/// Per-state similarity to the reference trajectory: `-sum_j c(i, j) * plan(i, j)`.
/// Every entry is `<= 0`; 0 means all of the state's mass moves at zero cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityScores(pub Vec<f64>);

impl SimilarityScores {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn similarity_scores(cost: &CostMatrix, plan: &TransportPlan) -> Result<SimilarityScores> {
    if (cost.rows(), cost.cols()) != plan.coupling.shape() {
        return Err(Error::Shape(format!(
            "cost is {}x{} but plan is {:?}",
            cost.rows(),
            cost.cols(),
            plan.coupling.shape()
        )));
    }
    let scores = (0..cost.rows())
        .map(|i| {
            let s: f64 = plan
                .coupling
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, p)| cost.get(i, j) * p)
                .sum();
            // Costs and plan entries are nonnegative, so -s <= 0; min() only scrubs -0.0.
            (-s).min(0.0)
        })
        .collect();
    Ok(SimilarityScores(scores))
}

/// Softmax of `scores / temperature`, computed with max-subtraction.
pub fn scores_to_sampling_weights(scores: &SimilarityScores, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("softmax temperature must be positive, got {temperature}")));
    }
    if scores.is_empty() {
        return Err(Error::Shape("cannot build sampling weights from zero scores".into()));
    }
    let max = scores.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.0.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use crate::ot::{sinkhorn, SinkhornParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_match_scores_zero() {
        let c = CostMatrix::build(&[vec![1.0, 1.0]], &[vec![2.0, 2.0]]).unwrap();
        let plan = sinkhorn(&c, SinkhornParams::default()).unwrap();
        let s = similarity_scores(&c, &plan).unwrap();
        assert!(s.0[0].abs() < 1e-12);
    }

    #[test]
    fn symmetric_case_scores_near_zero() {
        let c = CostMatrix::from_matrix(Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
        let plan = sinkhorn(&c, SinkhornParams { reg: 0.01, max_iters: 1000, tol: 1e-9 }).unwrap();
        let s = similarity_scores(&c, &plan).unwrap();
        assert!(s.0.iter().all(|v| v.abs() < 1e-12 && *v <= 0.0));
    }

    #[test]
    fn scores_match_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = CostMatrix::from_matrix(Matrix::from_fn(3, 3, |_, _| rng.gen_range(0.0..2.0))).unwrap();
        let plan = sinkhorn(&c, SinkhornParams::default()).unwrap();
        let s = similarity_scores(&c, &plan).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc -= c.get(i, j) * plan.coupling.get(i, j);
            }
            assert!((s.0[i] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let c = CostMatrix::build(&[vec![1.0], vec![2.0]], &[vec![1.0]]).unwrap();
        let other = CostMatrix::build(&[vec![1.0]], &[vec![1.0]]).unwrap();
        let plan = sinkhorn(&other, SinkhornParams::default()).unwrap();
        assert!(similarity_scores(&c, &plan).is_err());
    }

    #[test]
    fn equal_scores_give_uniform_weights() {
        let w = scores_to_sampling_weights(&SimilarityScores(vec![-0.4; 5]), 0.5).unwrap();
        assert!(w.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn ln2_gap_gives_two_to_one() {
        let w = scores_to_sampling_weights(&SimilarityScores(vec![0.0, -std::f64::consts::LN_2]), 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn matches_exp_normalize_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let temperature = 0.3;
        let w = scores_to_sampling_weights(&SimilarityScores(scores.clone()), temperature).unwrap();
        let mut m = f64::NEG_INFINITY;
        for s in &scores {
            if *s > m {
                m = *s;
            }
        }
        let mut z = 0.0;
        let mut e = Vec::new();
        for s in &scores {
            let v = ((s - m) / temperature).exp();
            z += v;
            e.push(v);
        }
        for (a, b) in w.iter().zip(&e) {
            assert!((a - b / z).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let s = SimilarityScores(vec![0.0]);
        assert!(scores_to_sampling_weights(&s, 0.0).is_err());
        assert!(scores_to_sampling_weights(&s, -1.0).is_err());
    }
}
