//! A small dense feed-forward network: ReLU hidden layers, linear output,
//! exact reverse-mode gradients, Adam, and FLOPs accounting.
//!
//! Batches are row-major: one sample per row.

mod bundle;
mod flops;
mod optim;
mod scaler;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{Surrogate, BUNDLE_FORMAT};
pub use flops::{count_flops, total_training_flops, FlopsBudget};
pub use optim::{adam_step, AdamHyper, AdamState};
pub use scaler::{MinMaxScaler, StandardScaler};

pub const MAX_HIDDEN_LAYERS: usize = 8;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no forward pass cached for the current parameters and batch")]
    StaleCache,
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    ReLU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Init {
    #[default]
    HeUniform,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            output_dim,
            hidden: hidden.to_vec(),
            activation: Activation::ReLU,
            seed,
            init: Init::HeUniform,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.hidden.len() > MAX_HIDDEN_LAYERS {
            return Err(NeuralError::InvalidConfig(format!(
                "{} hidden layers, at most {MAX_HIDDEN_LAYERS} supported",
                self.hidden.len()
            )));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(NeuralError::InvalidConfig("all layer widths must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `(n_in, n_out)` of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let widths: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.output_dim))
            .collect();
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Hidden widths as `"64x64"`; `"linear"` without hidden layers.
    pub fn arch_label(&self) -> String {
        if self.hidden.is_empty() {
            "linear".into()
        } else {
            self.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join("x")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `n_out × n_in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Parameter gradients, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
struct Cache {
    generation: u64,
    /// Input of every layer; `acts[0]` is the batch itself.
    acts: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub config: MlpConfig,
    layers: Vec<Layer>,
    generation: u64,
    cache: Option<Cache>,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers
    }
}

impl MlpModel {
    /// He-uniform weights drawn from a stream seeded by `config.seed`; zero biases.
    pub fn new(config: MlpConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(n_in, n_out)| {
                let limit = (6.0 / n_in as f64).sqrt();
                Layer {
                    w: Array2::from_shape_simple_fn((n_out, n_in), || {
                        rng.random_range(-limit..limit)
                    }),
                    b: Array1::zeros(n_out),
                }
            })
            .collect();
        Ok(MlpModel {
            config,
            layers,
            generation: 0,
            cache: None,
        })
    }

    /// Builds a model from explicit parameters; shapes must chain.
    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self, NeuralError> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len()
            || dims
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.w.dim() != (o, i) || l.b.len() != o)
        {
            return Err(NeuralError::InvalidConfig(
                "layer shapes do not match the configuration".into(),
            ));
        }
        Ok(MlpModel {
            config,
            layers,
            generation: 0,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates any cached forward pass.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.config.input_dim {
            return Err(NeuralError::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn affine(layer: &Layer, a: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = a.dot(&layer.w.t());
        z += &layer.b;
        z
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            a = Self::affine(layer, &a.view());
            if k < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Forward pass that keeps the intermediates needed by [`backward`](Self::backward).
    pub fn forward_cached(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Self::affine(layer, &a.view());
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(a);
            a = z;
        }
        self.cache = Some(Cache {
            generation: self.generation,
            acts,
        });
        Ok(a)
    }

    /// Gradients of `Σ grad_output ⊙ output` over the cached batch.
    pub fn backward(&self, grad_output: ArrayView2<f64>) -> Result<Gradients, NeuralError> {
        let cache = match &self.cache {
            Some(c) if c.generation == self.generation => c,
            _ => return Err(NeuralError::StaleCache),
        };
        if grad_output.nrows() != cache.acts[0].nrows() {
            return Err(NeuralError::StaleCache);
        }
        if grad_output.ncols() != self.config.output_dim {
            return Err(NeuralError::DimensionMismatch {
                expected: self.config.output_dim,
                got: grad_output.ncols(),
            });
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.to_owned();
        for k in (0..self.layers.len()).rev() {
            let a = &cache.acts[k];
            let dw = delta.t().dot(a);
            let db = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev = delta.dot(&self.layers[k].w);
                // ReLU derivative, read off the stored activation
                prev.zip_mut_with(a, |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = prev;
            }
            out.push(Layer { w: dw, b: db });
        }
        out.reverse();
        Ok(Gradients { layers: out })
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| NeuralError::InvalidConfig(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let cfg = MlpConfig::new(3, &[5], 2, 0);
        let mut m = MlpModel::new(cfg).unwrap();
        for l in m.layers_mut() {
            l.w.fill(0.0);
        }
        m.layers_mut()[1].b = ndarray::arr1(&[0.5, -2.0]);
        let y = m.forward(random_batch(4, 3, 1).view()).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -2.0]);
        }
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let cfg = MlpConfig::new(3, &[], 3, 0);
        let m = MlpModel::from_layers(
            cfg,
            vec![Layer {
                w: Array2::eye(3),
                b: Array1::zeros(3),
            }],
        )
        .unwrap();
        let x = ndarray::arr2(&[[0.0, 1.5, 3.0]]);
        assert_eq!(m.forward(x.view()).unwrap(), x);
    }

    /// Scalar loops over every sample, neuron and weight.
    fn naive_forward(m: &MlpModel, x: &Array2<f64>) -> Array2<f64> {
        let n_layers = m.layers().len();
        let mut rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        for (k, layer) in m.layers().iter().enumerate() {
            let (n_out, n_in) = layer.w.dim();
            rows = rows
                .iter()
                .map(|a| {
                    let mut z = vec![0.0; n_out];
                    for o in 0..n_out {
                        let mut s = layer.b[o];
                        for i in 0..n_in {
                            s += layer.w[(o, i)] * a[i];
                        }
                        z[o] = if k + 1 < n_layers && s < 0.0 { 0.0 } else { s };
                    }
                    z
                })
                .collect();
        }
        let cols = rows[0].len();
        Array2::from_shape_vec((rows.len(), cols), rows.concat()).unwrap()
    }

    #[test]
    fn forward_matches_triple_loop() {
        for seed in 0..5 {
            let mut m = MlpModel::new(MlpConfig::new(6, &[9, 7], 4, seed)).unwrap();
            for l in m.layers_mut() {
                l.b.mapv_inplace(|_| 0.1);
            }
            let x = random_batch(11, 6, 100 + seed);
            let fast = m.forward(x.view()).unwrap();
            let slow = naive_forward(&m, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    /// Central-difference check of every parameter of a random model.
    pub(crate) fn gradient_check(cfg: MlpConfig, batch: usize, seed: u64) -> f64 {
        let mut m = MlpModel::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in m.layers_mut() {
            l.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = random_batch(batch, cfg.input_dim, seed + 1);
        let g = random_batch(batch, cfg.output_dim, seed + 2);
        m.forward_cached(x.view()).unwrap();
        let grads = m.backward(g.view()).unwrap();
        let loss = |m: &MlpModel| (&m.forward(x.view()).unwrap() * &g).sum();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..m.layers().len() {
            let (rows, cols) = m.layers()[k].w.dim();
            let mut params: Vec<(Option<(usize, usize)>, usize)> = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    params.push((Some((r, c)), 0));
                }
                params.push((None, r));
            }
            for (wc, r) in params {
                let mut plus = m.clone();
                let mut minus = m.clone();
                match wc {
                    Some(idx) => {
                        plus.layers_mut()[k].w[idx] += h;
                        minus.layers_mut()[k].w[idx] -= h;
                    }
                    None => {
                        plus.layers_mut()[k].b[r] += h;
                        minus.layers_mut()[k].b[r] -= h;
                    }
                }
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let exact = match wc {
                    Some(idx) => grads.layers[k].w[idx],
                    None => grads.layers[k].b[r],
                };
                let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(gradient_check(MlpConfig::new(4, &[8], 3, 7), 5, 3) <= 1e-4);
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let depth = rng.random_range(0..3usize);
            let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..7)).collect();
            let cfg = MlpConfig::new(rng.random_range(1..5), &hidden, rng.random_range(1..4), trial);
            let err = gradient_check(cfg.clone(), rng.random_range(1..5), trial * 31);
            assert!(err <= 1e-4, "{cfg:?}: {err}");
        }
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut m = MlpModel::new(MlpConfig::new(4, &[8], 3, 1)).unwrap();
        m.forward_cached(random_batch(6, 4, 2).view()).unwrap();
        let g = m.backward(Array2::zeros((6, 3)).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let mut m = MlpModel::new(MlpConfig::new(4, &[8], 3, 1)).unwrap();
        let x = random_batch(1, 4, 5);
        let g = random_batch(1, 3, 6);
        m.forward_cached(x.view()).unwrap();
        let single = m.backward(g.view()).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let g2 = ndarray::concatenate(Axis(0), &[g.view(), g.view()]).unwrap();
        m.forward_cached(x2.view()).unwrap();
        let double = m.backward(g2.view()).unwrap();
        for (a, b) in single.layers.iter().zip(&double.layers) {
            assert_eq!(&a.w * 2.0, b.w);
            assert_eq!(&a.b * 2.0, b.b);
        }
    }

    #[test]
    fn stale_cache_detected() {
        let mut m = MlpModel::new(MlpConfig::new(2, &[3], 1, 1)).unwrap();
        let g = Array2::ones((2, 1));
        assert!(matches!(m.backward(g.view()), Err(NeuralError::StaleCache)));
        m.forward_cached(random_batch(2, 2, 1).view()).unwrap();
        assert!(m.backward(g.view()).is_ok());
        m.layers_mut()[0].b[0] = 1.0;
        assert!(matches!(m.backward(g.view()), Err(NeuralError::StaleCache)));
        m.forward_cached(random_batch(3, 2, 1).view()).unwrap();
        assert!(matches!(m.backward(g.view()), Err(NeuralError::StaleCache)));
    }

    #[test]
    fn config_validation_and_dimension_errors() {
        assert!(MlpModel::new(MlpConfig::new(0, &[3], 1, 0)).is_err());
        assert!(MlpModel::new(MlpConfig::new(2, &[3; 9], 1, 0)).is_err());
        let m = MlpModel::new(MlpConfig::new(2, &[3], 1, 0)).unwrap();
        assert!(matches!(
            m.forward(Array2::zeros((1, 5)).view()),
            Err(NeuralError::DimensionMismatch { expected: 2, got: 5 })
        ));
    }

    #[test]
    fn init_is_seeded_he_uniform() {
        let a = MlpModel::new(MlpConfig::new(50, &[40], 3, 9)).unwrap();
        let b = MlpModel::new(MlpConfig::new(50, &[40], 3, 9)).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(a.layers()[0].w.iter().all(|w| w.abs() < limit));
        assert!(a.layers()[0].b.iter().all(|&b| b == 0.0));
    }

    proptest! {
        #[test]
        fn homogeneous_in_final_weights(seed in 0u64..500, c in 0.1f64..10.0) {
            let mut m = MlpModel::new(MlpConfig::new(3, &[6, 5], 2, seed)).unwrap();
            let x = random_batch(4, 3, seed);
            let y = m.forward(x.view()).unwrap();
            let last = m.layers_mut().last_mut().unwrap();
            last.w.mapv_inplace(|w| w * c);
            let y2 = m.forward(x.view()).unwrap();
            for (a, b) in y.iter().zip(&y2) {
                prop_assert!((a * c - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn parameter_count_matches_layers(
            input in 1usize..20,
            hidden in prop::collection::vec(1usize..30, 0..5),
            output in 1usize..10,
        ) {
            let cfg = MlpConfig::new(input, &hidden, output, 0);
            let m = MlpModel::new(cfg.clone()).unwrap();
            prop_assert_eq!(m.parameter_count(), cfg.parameter_count());
            let biases: usize = cfg.layer_dims().iter().map(|d| d.1).sum();
            prop_assert_eq!(count_flops(&cfg), (2 * cfg.parameter_count() - biases) as u64);
        }
    }
}
