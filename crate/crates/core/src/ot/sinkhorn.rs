//! Entropic optimal transport between two uniform empirical measures, solved with
//! log-domain Sinkhorn iterations.

use super::CostMatrix;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub reg: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            reg: 0.05,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

/// Coupling between the rows (weights `1/T`) and columns (weights `1/T'`) of a cost matrix.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Matrix,
    /// `sum(cost ∘ coupling)`.
    pub transport_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm violation over both marginals.
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.coupling.rows()).map(|r| self.coupling.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.coupling.cols()];
        for r in 0..self.coupling.rows() {
            out.iter_mut().zip(self.coupling.row(r)).for_each(|(o, v)| *o += v);
        }
        out
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Largest `max(C)/reg` for which the kernel `exp(-C/reg)` is iterated directly; beyond
/// it the iterations run on log-domain potentials to avoid underflow.
const KERNEL_DOMAIN_LIMIT: f64 = 100.0;

struct Potentials {
    /// `f / reg`
    f: Vec<f64>,
    /// `g / reg`
    g: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Solves `min <C, P> - reg * H(P)` over couplings with uniform marginals.
///
/// Alternates the two marginal projections. Stops once the row-marginal sup-norm
/// violation (column marginals are exact after every column update) is at most `tol`. If
/// `max_iters` is hit first, the iterate with the smallest violation is returned with
/// `converged = false`.
pub fn sinkhorn(cost: &CostMatrix, params: SinkhornParams) -> Result<TransportPlan> {
    if !(params.reg > 0.0) || !params.reg.is_finite() {
        return Err(Error::Config(format!("sinkhorn reg must be positive, got {}", params.reg)));
    }
    if params.max_iters == 0 {
        return Err(Error::Config("sinkhorn max_iters must be at least 1".into()));
    }
    let (n, m) = (cost.rows(), cost.cols());
    let reg = params.reg;
    let c = cost.matrix();
    let neg_c: Vec<f64> = c.as_slice().iter().map(|v| -v / reg).collect();
    let spread = c.as_slice().iter().fold(0.0f64, |a, &v| a.max(v)) / reg;

    let pot = if spread <= KERNEL_DOMAIN_LIMIT {
        kernel_iterations(&neg_c, n, m, params)?
    } else {
        log_iterations(&neg_c, n, m, params)?
    };

    let mut coupling = Matrix::zeros(n, m);
    let mut transport_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = (pot.f[i] + pot.g[j] + neg_c[i * m + j]).exp();
            coupling.set(i, j, p);
            transport_cost += p * c.get(i, j);
        }
    }
    if !transport_cost.is_finite() {
        return Err(Error::Numeric(format!(
            "sinkhorn plan is not finite (reg = {reg}); increase the regularization"
        )));
    }
    let mut plan = TransportPlan {
        coupling,
        transport_cost,
        converged: pot.converged,
        iterations: pot.iterations,
        marginal_error: 0.0,
    };
    let row_err = plan.row_sums().iter().map(|s| (s - 1.0 / n as f64).abs()).fold(0.0, f64::max);
    let col_err = plan.col_sums().iter().map(|s| (s - 1.0 / m as f64).abs()).fold(0.0, f64::max);
    plan.marginal_error = row_err.max(col_err);
    Ok(plan)
}

fn non_finite(iterations: usize, reg: f64) -> Error {
    Error::Numeric(format!(
        "sinkhorn produced non-finite potentials at iteration {iterations} (reg = {reg}); \
         increase the regularization"
    ))
}

/// Scaling form: `u = a / (K v)`, `v = b / (K^T u)` with `K = exp(-C/reg)`.
fn kernel_iterations(neg_c: &[f64], n: usize, m: usize, params: SinkhornParams) -> Result<Potentials> {
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let k: Vec<f64> = neg_c.iter().map(|v| v.exp()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![0.0; m];
    let mut kv = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..params.max_iters {
        iterations = it + 1;
        v.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = &k[i * m..(i + 1) * m];
            v.iter_mut().zip(row).for_each(|(x, kij)| *x += kij * u[i]);
        }
        v.iter_mut().for_each(|x| *x = b / *x);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let row = &k[i * m..(i + 1) * m];
            kv[i] = row.iter().zip(&v).map(|(kij, vj)| kij * vj).sum();
            err = err.max((u[i] * kv[i] - a).abs());
        }
        if !err.is_finite() || v.iter().any(|x| !x.is_finite() || *x == 0.0) {
            return Err(non_finite(iterations, params.reg));
        }
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, u.clone(), v.clone()));
        }
        if err <= params.tol {
            converged = true;
            break;
        }
        u.iter_mut().zip(&kv).for_each(|(x, s)| *x = a / s);
    }
    let (u, v) = if converged {
        (u, v)
    } else {
        let (_, bu, bv) = best.expect("at least one iteration ran");
        (bu, bv)
    };
    Ok(Potentials {
        f: u.iter().map(|x| x.ln()).collect(),
        g: v.iter().map(|x| x.ln()).collect(),
        converged,
        iterations,
    })
}

/// Log-domain form on scaled potentials `f̃ = f/reg`, `g̃ = g/reg`.
fn log_iterations(neg_c: &[f64], n: usize, m: usize, params: SinkhornParams) -> Result<Potentials> {
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut row_lse = vec![0.0; n];
    let mut col_acc = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..params.max_iters {
        iterations = it + 1;
        // g̃_j = log b - LSE_i(f̃_i - C_ij/reg)
        let col_max: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| f[i] + neg_c[i * m + j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        col_acc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &neg_c[i * m..(i + 1) * m];
            for j in 0..m {
                col_acc[j] += (f[i] + row[j] - col_max[j]).exp();
            }
        }
        for j in 0..m {
            g[j] = log_b - (col_max[j] + col_acc[j].ln());
        }

        let mut err: f64 = 0.0;
        for i in 0..n {
            let row = &neg_c[i * m..(i + 1) * m];
            row_lse[i] = log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj));
            let mass = (f[i] + row_lse[i]).exp();
            err = err.max((mass - 1.0 / n as f64).abs());
        }
        if !err.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(iterations, params.reg));
        }
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, f.clone(), g.clone()));
        }
        if err <= params.tol {
            converged = true;
            break;
        }
        for i in 0..n {
            f[i] = log_a - row_lse[i];
        }
    }
    let (f, g) = if converged {
        (f, g)
    } else {
        let (_, bf, bg) = best.expect("at least one iteration ran");
        (bf, bg)
    };
    Ok(Potentials { f, g, converged, iterations })
}
