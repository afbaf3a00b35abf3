//! Fully connected tanh network with an identity output layer and hand-written
//! reverse-mode gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

const TEXT_MAGIC: &str = "sipp-mlp";
const TEXT_VERSION: u32 = 1;

/// Weights and biases of an MLP. Hidden layers use `tanh`, the output layer is linear.
///
/// `weights[i]` has shape `layer_sizes[i + 1] x layer_sizes[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Gradients with the same layout as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Post-activation values of every layer (input first, output last) from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("activations always hold the input layer")
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Shape(format!(
            "an MLP needs at least an input and an output layer, got sizes {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Shape(format!("zero-width layer in sizes {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(layer_sizes: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::Shape(format!(
                "{n_layers} layers declared but got {} weight matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let expected = (layer_sizes[i + 1], layer_sizes[i]);
            if w.shape() != expected {
                return Err(Error::Shape(format!(
                    "weight {i} is {:?}, expected {expected:?}",
                    w.shape()
                )));
            }
            if b.len() != layer_sizes[i + 1] {
                return Err(Error::Shape(format!(
                    "bias {i} has length {}, expected {}",
                    b.len(),
                    layer_sizes[i + 1]
                )));
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
        })
    }

    /// Orthogonal initialization: hidden layers scaled by `hidden_gain`, the output
    /// layer by `output_gain`, all biases zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes)?;
        let last = mlp.weights.len() - 1;
        for (i, w) in mlp.weights.iter_mut().enumerate() {
            let gain = if i == last { output_gain } else { hidden_gain };
            *w = orthogonal_matrix(w.rows(), w.cols(), gain, rng);
        }
        Ok(mlp)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "MLP input has length {}, network expects {} (layer sizes {:?})",
                input.len(),
                self.input_dim(),
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.layers.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<Activations> {
        self.check_input(input)?;
        let n = self.weights.len();
        let mut layers = Vec::with_capacity(n + 1);
        layers.push(input.to_vec());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = vec![0.0; w.rows()];
            w.affine_into(&layers[i], b, &mut out);
            if i + 1 < n {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(out);
        }
        Ok(Activations { layers })
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Accumulates into `grads` the gradient of `output · output_grad` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, acts: &Activations, output_grad: &[f64], grads: &mut MlpGrads) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has length {}, network output is {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if acts.layers.len() != self.layer_sizes.len() || acts.input().len() != self.input_dim() {
            return Err(Error::Shape("activations were not produced by this network".into()));
        }
        if grads.weights.len() != self.weights.len() {
            return Err(Error::Shape("gradient buffer does not match network depth".into()));
        }
        let n = self.weights.len();
        let mut delta = output_grad.to_vec();
        for i in (0..n).rev() {
            if i + 1 < n {
                // tanh'(z) = 1 - tanh(z)^2, and the cached activation is tanh(z).
                for (d, a) in delta.iter_mut().zip(&acts.layers[i + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            grads.weights[i].add_outer(&delta, &acts.layers[i], 1.0);
            for (gb, d) in grads.biases[i].iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut prev = vec![0.0; self.layer_sizes[i]];
            self.weights[i].transpose_mul_acc(&delta, &mut prev);
            delta = prev;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Versioned plain-text checkpoint record: layer sizes followed by row-major
    /// weights and biases, one array per line, printed at full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = format!("{TEXT_MAGIC} v{TEXT_VERSION}\n");
        out.push_str("sizes");
        for s in &self.layer_sizes {
            out.push_str(&format!(" {s}"));
        }
        out.push('\n');
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push_str(&format!("weight {i}"));
            for v in w.as_slice() {
                out.push_str(&format!(" {v:e}"));
            }
            out.push('\n');
            out.push_str(&format!("bias {i}"));
            for v in b {
                out.push_str(&format!(" {v:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::format("mlp record", reason);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty record".into()))?;
        let expected = format!("{TEXT_MAGIC} v{TEXT_VERSION}");
        if header.trim() != expected {
            return Err(bad(format!("unsupported header {header:?}, expected {expected:?}")));
        }
        let sizes_line = lines.next().ok_or_else(|| bad("missing sizes line".into()))?;
        let mut toks = sizes_line.split_whitespace();
        if toks.next() != Some("sizes") {
            return Err(bad("second line must start with 'sizes'".into()));
        }
        let sizes = toks
            .map(|t| t.parse::<usize>().map_err(|e| bad(format!("bad layer size {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        check_sizes(&sizes)?;

        let parse_array = |line: Option<&str>, tag: &str, idx: usize, len: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad(format!("missing {tag} {idx}")))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(tag) || toks.next() != Some(idx.to_string().as_str()) {
                return Err(bad(format!("expected '{tag} {idx}' line")));
            }
            let vals = toks
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("bad number {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != len {
                return Err(bad(format!("{tag} {idx} has {} values, expected {len}", vals.len())));
            }
            Ok(vals)
        };

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..sizes.len() - 1 {
            let w = parse_array(lines.next(), "weight", i, sizes[i] * sizes[i + 1])?;
            weights.push(Matrix::from_vec(sizes[i + 1], sizes[i], w)?);
            biases.push(parse_array(lines.next(), "bias", i, sizes[i + 1])?);
        }
        if lines.next().is_some() {
            return Err(bad("trailing data after last layer".into()));
        }
        Self::from_parts(sizes, weights, biases)
    }
}

impl MlpGrads {
    pub fn scale(&mut self, s: f64) {
        for slice in self.slices_mut() {
            slice.iter_mut().for_each(|v| *v *= s);
        }
    }
}

impl ParamSet for Mlp {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}

impl ParamSet for MlpGrads {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is shorter), times `gain`.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let k = rows.min(cols);
    let n = rows.max(cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    if rows <= cols {
        Matrix::from_fn(rows, cols, |r, c| gain * basis[r][c])
    } else {
        Matrix::from_fn(rows, cols, |r, c| gain * basis[c][r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mlp(sizes: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mlp::orthogonal(sizes, 1.0, 1.0, &mut rng).unwrap();
        for b in m.biases_mut() {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        m
    }

    /// Independent loop-based oracle: explicit triple loop over layers, rows, columns.
    fn oracle_forward(m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = m.weights().len();
        for l in 0..n {
            let w = &m.weights()[l];
            let mut z = Vec::new();
            for r in 0..w.rows() {
                let mut s = m.biases()[l][r];
                for c in 0..w.cols() {
                    s += w.get(r, c) * a[c];
                }
                z.push(if l + 1 < n { s.tanh() } else { s });
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tanh_hidden_of_zero_is_zero() {
        let w = vec![Matrix::from_vec(1, 1, vec![1.0]).unwrap(), Matrix::from_vec(1, 1, vec![1.0]).unwrap()];
        let m = Mlp::from_parts(vec![1, 1, 1], w, vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(m.forward(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let m = random_mlp(&[2, 3, 1], 11);
        let x = [0.3, -1.2];
        let got = m.forward(&x).unwrap();
        let want = oracle_forward(&m, &x);
        assert_eq!(got, want);
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let m = Mlp::zeros(&[3, 4, 2]).unwrap();
        let err = m.forward(&[1.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains("length 2") && err.contains("expects 3"), "{err}");
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let m = random_mlp(&[3, 4, 2], 3);
        let acts = m.forward_cached(&[0.1, 0.2, 0.3]).unwrap();
        let mut g = m.zero_grads();
        m.backward(&acts, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_linear_neuron_gradient() {
        let m = Mlp::from_parts(vec![1, 1], vec![Matrix::from_vec(1, 1, vec![0.7]).unwrap()], vec![vec![0.0]]).unwrap();
        let acts = m.forward_cached(&[2.5]).unwrap();
        let mut g = m.zero_grads();
        m.backward(&acts, &[3.0], &mut g).unwrap();
        assert_eq!(g.weights[0].get(0, 0), 2.5 * 3.0);
        assert_eq!(g.biases[0][0], 3.0);
    }

    #[test]
    fn backward_matches_central_differences() {
        let m = random_mlp(&[3, 5, 4, 2], 21);
        let x = [0.4, -0.3, 0.9];
        let og = [0.7, -1.3];
        let acts = m.forward_cached(&x).unwrap();
        let mut g = m.zero_grads();
        m.backward(&acts, &og, &mut g).unwrap();

        let f = |m: &Mlp| -> f64 { m.forward(&x).unwrap().iter().zip(&og).map(|(a, b)| a * b).sum() };
        let h = 1e-5;
        let analytic: Vec<f64> = g.slices().concat();
        let mut probe = m.clone();
        let mut idx = 0;
        let n_slices = probe.slices().len();
        for s in 0..n_slices {
            let len = probe.slices()[s].len();
            for j in 0..len {
                let orig = probe.slices()[s][j];
                probe.slices_mut()[s][j] = orig + h;
                let fp = f(&probe);
                probe.slices_mut()[s][j] = orig - h;
                let fm = f(&probe);
                probe.slices_mut()[s][j] = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {idx}: analytic {a}, numeric {numeric}");
                idx += 1;
            }
        }
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = orthogonal_matrix(4, 9, 1.0, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn text_record_round_trips_exactly() {
        let m = random_mlp(&[4, 7, 3], 99);
        let back = Mlp::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn text_record_rejects_wrong_version() {
        let m = random_mlp(&[2, 2], 1);
        let text = m.to_text().replacen("v1", "v9", 1);
        assert!(Mlp::from_text(&text).is_err());
    }
}
