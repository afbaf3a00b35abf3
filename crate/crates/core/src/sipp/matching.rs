use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ot::{
    scores_to_sampling_weights, similarity_scores, sinkhorn, standardize, state_moments, CostMatrix, SinkhornParams,
};
use crate::rl::{uniform_partition, BatchSampler, BatchSource, Minibatch};

/// OT similarity of every rollout state to the reference trajectory, computed once per
/// outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchWeights {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub converged: bool,
    pub sinkhorn_iterations: usize,
    pub transport_cost: f64,
}

/// Scores `rollout_states` against `reference_states` (both standardized with the
/// rollout's moments) and turns the scores into sampling weights.
pub fn match_weights(
    rollout_states: &[Vec<f64>],
    reference_states: &[Vec<f64>],
    sinkhorn_params: SinkhornParams,
    temperature: f64,
) -> Result<MatchWeights> {
    if rollout_states.is_empty() || reference_states.is_empty() {
        return Err(Error::Shape("match_weights needs nonempty rollout and reference states".into()));
    }
    let (mean, std) = state_moments(rollout_states);
    let x = standardize(rollout_states, &mean, &std);
    let y = standardize(reference_states, &mean, &std);
    let cost = CostMatrix::build(&x, &y)?;
    let plan = sinkhorn(&cost, sinkhorn_params)?;
    let scores = similarity_scores(&cost, &plan)?;
    let weights = scores_to_sampling_weights(&scores, temperature)?;
    Ok(MatchWeights {
        scores: scores.0,
        weights,
        converged: plan.converged,
        sinkhorn_iterations: plan.iterations,
        transport_cost: plan.transport_cost,
    })
}

/// Minibatch sampler of the MATCH inner loop.
///
/// Each epoch starts from a uniform shuffled partition drawn from `batch_rng`, exactly as
/// [`crate::rl::UniformSampler`] does. Each minibatch of that partition is then, with
/// probability `xi`, replaced by an equally sized batch drawn with replacement from
/// `weights`; the coin and the weighted draws use `source_rng` only, so `batch_rng`
/// advances identically for every `xi`.
pub struct MatchSampler<'a, R: Rng + ?Sized, S: Rng + ?Sized> {
    weights: Option<WeightedIndex<f64>>,
    xi: f64,
    batch_rng: &'a mut R,
    source_rng: &'a mut S,
}

impl<'a, R: Rng + ?Sized, S: Rng + ?Sized> MatchSampler<'a, R, S> {
    /// `weights = None` (empty buffer, failed solve) or `xi = 0` gives plain uniform sampling.
    pub fn new(weights: Option<&[f64]>, xi: f64, batch_rng: &'a mut R, source_rng: &'a mut S) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::Config(format!("xi must lie in [0, 1], got {xi}")));
        }
        let weights = match weights {
            Some(w) if xi > 0.0 => Some(
                WeightedIndex::new(w).map_err(|e| Error::Numeric(format!("invalid MATCH sampling weights: {e}")))?,
            ),
            _ => None,
        };
        Ok(Self {
            weights,
            xi,
            batch_rng,
            source_rng,
        })
    }
}

impl<R: Rng + ?Sized, S: Rng + ?Sized> BatchSampler for MatchSampler<'_, R, S> {
    fn epoch_plan(&mut self, n: usize, batch_size: usize) -> Vec<Minibatch> {
        let parts = uniform_partition(n, batch_size, self.batch_rng);
        parts
            .into_iter()
            .map(|indices| match &self.weights {
                Some(dist) if self.source_rng.gen_bool(self.xi) => Minibatch {
                    indices: (0..indices.len()).map(|_| dist.sample(self.source_rng)).collect(),
                    source: BatchSource::Prioritized,
                },
                _ => Minibatch {
                    indices,
                    source: BatchSource::Uniform,
                },
            })
            .collect()
    }
}
