//! Optimal-transport similarity between a rollout and a reference trajectory.

mod cost;
mod scores;
mod sinkhorn;

pub use cost::{cosine_cost, standardize, state_moments, CostMatrix};
pub use scores::{scores_to_sampling_weights, similarity_scores, SimilarityScores};
pub use sinkhorn::{sinkhorn, SinkhornParams, TransportPlan};
