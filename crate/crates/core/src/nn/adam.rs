use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

/// Adam moment estimates for a parameter set, stored flat in [`ParamSet::slices`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn for_params<P: ParamSet + ?Sized>(params: &P, learning_rate: f64) -> Self {
        Self::new(params.num_params(), learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `params` against `grads`.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: ParamSet + ?Sized,
        G: ParamSet + ?Sized,
    {
        let grad_slices = grads.slices();
        let mut param_slices = params.slices_mut();
        if grad_slices.len() != param_slices.len()
            || grad_slices.iter().zip(&param_slices).any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::Shape(format!(
                "gradient layout {:?} does not match parameter layout {:?}",
                grad_slices.iter().map(|s| s.len()).collect::<Vec<_>>(),
                param_slices.iter().map(|s| s.len()).collect::<Vec<_>>()
            )));
        }
        let total: usize = grad_slices.iter().map(|s| s.len()).sum();
        if total != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {total}",
                self.first_moment.len()
            )));
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let mut k = 0;
        for (p_slice, g_slice) in param_slices.iter_mut().zip(&grad_slices) {
            for (p, &g) in p_slice.iter_mut().zip(g_slice.iter()) {
                let m = &mut self.first_moment[k];
                let v = &mut self.second_moment[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                if !p.is_finite() {
                    return Err(Error::Numeric(format!(
                        "Adam step {} produced a non-finite parameter at flat index {k}",
                        self.step_count
                    )));
                }
                k += 1;
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so that their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm<G: ParamSet + ?Sized>(grads: &mut G, max_norm: f64) -> f64 {
    let norm = grads
        .slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / (norm + 1e-6);
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}
