//! Dense MLP substrate: row-major matrices, tanh networks with exact gradients, Adam.

mod adam;
mod matrix;
mod mlp;

pub use adam::{clip_grad_norm, Adam};
pub use matrix::Matrix;
pub use mlp::{Activations, Mlp, MlpGrads};

/// A collection of parameters (or gradients) exposed as a fixed sequence of flat slices.
///
/// Two values with the same layout expose slices of identical lengths in the same order,
/// which is what lets [`Adam`] pair parameters with gradients.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
