//! A small MLP encoder standing in for a heavyweight vision backbone:
//! tanh hidden layers, a linear output layer, and an L2-normalized output.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out x in.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

/// Feed-forward encoder mapping observation vectors to unit-norm embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    layers: Vec<DenseLayer>,
}

/// Per-layer parameter gradients in the same order as [`ToyEncoder::flatten`].
pub struct EncoderGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Cached activations from a batch forward pass.
pub struct ForwardCache {
    /// Input plus post-activation output of every hidden layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    pre_activations: Vec<Array2<f64>>,
    /// Pre-normalization output of the final linear layer.
    pre_norm: Array2<f64>,
    /// Row norms of `pre_norm`.
    norms: Array1<f64>,
    /// Normalized output.
    pub output: Array2<f64>,
}

impl ToyEncoder {
    /// Xavier-uniform initialization with the given layer plan, e.g.
    /// input 32, hidden &[256, 128], output 64.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidInput("encoder layer widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit));
            layers.push(DenseLayer { weights, bias: Array1::zeros(fan_out) });
        }
        Ok(Self { layers })
    }

    /// A single identity linear layer: forward reduces to L2 normalization.
    pub fn identity(dim: usize) -> Self {
        Self { layers: vec![DenseLayer { weights: Array2::eye(dim), bias: Array1::zeros(dim) }] }
    }

    /// All-zero parameters with the given plan (degenerate by construction:
    /// the forward pass fails at normalization).
    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer { weights: Array2::zeros((w[1], w[0])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    /// Layer widths including input and output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass with caching for backprop. Rejects a dimension mismatch
    /// and any row whose pre-normalization output is zero.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimMismatch(format!(
                "encoder expects input dim {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut inputs = vec![x.to_owned()];
        let mut pre_activations = Vec::new();
        let n_hidden = self.layers.len() - 1;
        let mut h = x.to_owned();
        for layer in &self.layers[..n_hidden] {
            let z = layer.forward(h.view());
            pre_activations.push(z.clone());
            h = z.mapv(f64::tanh);
            inputs.push(h.clone());
        }
        let pre_norm = self.layers[n_hidden].forward(h.view());
        let norms = pre_norm.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        for (i, &nrm) in norms.iter().enumerate() {
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::Degenerate(format!(
                    "encoder output row {i} has norm {nrm}; cannot normalize"
                )));
            }
        }
        let mut output = pre_norm.clone();
        for (mut row, &nrm) in output.rows_mut().into_iter().zip(norms.iter()) {
            row.mapv_inplace(|v| v / nrm);
        }
        Ok(ForwardCache { inputs, pre_activations, pre_norm, norms, output })
    }

    /// Single-vector forward: the unit-norm embedding.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let batch = x.insert_axis(Axis(0));
        let cache = self.forward_batch(batch)?;
        Ok(cache.output.row(0).to_owned())
    }

    /// Backpropagate `d_output` (gradient w.r.t. the normalized embeddings)
    /// through the normalization and all layers, returning parameter grads.
    pub fn backward(&self, cache: &ForwardCache, d_output: ArrayView2<f64>) -> EncoderGrads {
        let n_hidden = self.layers.len() - 1;
        // Through y = u / |u|:  dL/du = (g - y (y . g)) / |u|.
        let mut delta = Array2::zeros(cache.pre_norm.raw_dim());
        for i in 0..cache.pre_norm.nrows() {
            let y = cache.output.row(i);
            let g = d_output.row(i);
            let proj = y.dot(&g);
            let nrm = cache.norms[i];
            for j in 0..y.len() {
                delta[[i, j]] = (g[j] - y[j] * proj) / nrm;
            }
        }
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> =
            vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];

        // Output linear layer.
        let dw = delta.t().dot(&cache.inputs[n_hidden]);
        let db = delta.sum_axis(Axis(0));
        grads[n_hidden] = (dw, db);
        let mut d_hidden = delta.dot(&self.layers[n_hidden].weights);

        // Hidden tanh layers, last to first.
        for l in (0..n_hidden).rev() {
            let dz = &d_hidden * &cache.pre_activations[l].mapv(|z| 1.0 - z.tanh().powi(2));
            let dw = dz.t().dot(&cache.inputs[l]);
            let db = dz.sum_axis(Axis(0));
            grads[l] = (dw, db);
            if l > 0 {
                d_hidden = dz.dot(&self.layers[l].weights);
            }
        }
        EncoderGrads { layers: grads }
    }

    /// Flatten all parameters, per layer: weights row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter().cloned());
            out.extend(l.bias.iter().cloned());
        }
        out
    }

    /// Overwrite parameters from a flat vector in [`flatten`](Self::flatten)
    /// order.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimMismatch(format!(
                "flat parameter vector has {} values, encoder has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = flat[off];
                off += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[off];
                off += 1;
            }
        }
        Ok(())
    }
}

impl EncoderGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().cloned());
            out.extend(b.iter().cloned());
        }
        out
    }

    pub fn add(&mut self, other: &EncoderGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::{infonce_grad, l2_normalize, LossConfig};
    use ndarray::Array;
    use rand::Rng;

    #[test]
    fn zero_encoder_rejected_at_normalization() {
        let enc = ToyEncoder::zeros(4, &[5], 3);
        let x = Array1::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(enc.forward(x.view()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_encoder_normalizes_input() {
        let enc = ToyEncoder::identity(3);
        let x = Array1::from_vec(vec![3.0, 0.0, 4.0]);
        let y = enc.forward(x.view()).unwrap();
        let expect = l2_normalize(x.view()).unwrap();
        assert!((&y - &expect).mapv(f64::abs).sum() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic_and_unit_norm() {
        let enc = ToyEncoder::new(6, &[10, 8], 4, 11).unwrap();
        let x = Array1::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.7, -0.2]);
        let a = enc.forward(x.view()).unwrap();
        let b = enc.forward(x.view()).unwrap();
        assert_eq!(a, b);
        assert!((a.dot(&a).sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let enc = ToyEncoder::new(6, &[10], 4, 11).unwrap();
        let x = Array1::from_vec(vec![1.0; 5]);
        assert!(enc.forward(x.view()).is_err());
    }

    #[test]
    fn param_count_matches_plan() {
        let enc = ToyEncoder::new(6, &[10, 8], 4, 0).unwrap();
        assert_eq!(enc.param_count(), 6 * 10 + 10 + 10 * 8 + 8 + 8 * 4 + 4);
        assert_eq!(enc.dims(), vec![6, 10, 8, 4]);
    }

    #[test]
    fn flatten_round_trip() {
        let enc = ToyEncoder::new(5, &[7], 3, 42).unwrap();
        let flat = enc.flatten();
        let mut other = ToyEncoder::new(5, &[7], 3, 43).unwrap();
        other.set_from_flat(&flat).unwrap();
        assert_eq!(enc, other);
    }

    /// End-to-end parameter gradient check: InfoNCE loss of encoded views
    /// versus central finite differences over every parameter.
    #[test]
    fn full_parameter_gradient_matches_finite_differences() {
        let cfg = LossConfig { temperature: 0.5, symmetrized: true };
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let enc = ToyEncoder::new(5, &[8, 6], 4, seed).unwrap();
            let xa = Array::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0f64));
            let xb = Array::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0f64));

            let loss_of = |e: &ToyEncoder| -> f64 {
                let ca = e.forward_batch(xa.view()).unwrap();
                let cb = e.forward_batch(xb.view()).unwrap();
                crate::contrast::infonce_batch(ca.output.view(), cb.output.view(), &cfg).unwrap()
            };

            let ca = enc.forward_batch(xa.view()).unwrap();
            let cb = enc.forward_batch(xb.view()).unwrap();
            let (_, dya, dyb) = infonce_grad(ca.output.view(), cb.output.view(), &cfg).unwrap();
            let mut grads = enc.backward(&ca, dya.view());
            grads.add(&enc.backward(&cb, dyb.view()));
            let analytic = grads.flatten();

            let flat = enc.flatten();
            let h = 1e-5;
            for p in 0..flat.len() {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[p] += h;
                minus[p] -= h;
                let mut ep = enc.clone();
                ep.set_from_flat(&plus).unwrap();
                let mut em = enc.clone();
                em.set_from_flat(&minus).unwrap();
                let numeric = (loss_of(&ep) - loss_of(&em)) / (2.0 * h);
                let denom = numeric.abs().max(analytic[p].abs()).max(1e-4);
                assert!(
                    (analytic[p] - numeric).abs() / denom <= 1e-4,
                    "seed {seed} param {p}: analytic {} vs numeric {numeric}",
                    analytic[p]
                );
            }
        }
    }
}
