use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
use crate::numeric::Float;
use crate::{error::config, Matrix, Result};

/// A named parameter tensor. Biases are stored as `1 x n` rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NamedTensor {
    pub name: String,
    value: Matrix,
}

impl NamedTensor {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

/// Ordered collection of parameter tensors. Shapes are fixed once a tensor
/// is pushed; only values can change.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamStore {
    tensors: Vec<NamedTensor>,
    rng_seed: u64,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        Self { tensors: Vec::new(), rng_seed }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.tensors.push(NamedTensor { name: name.into(), value });
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn get(&self, idx: usize) -> &Matrix {
        &self.tensors[idx].value
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.tensors[idx].name
    }

    /// Mutable view of a tensor's values; the shape cannot change through it.
    pub fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        self.tensors[idx].value.as_mut_slice()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(NamedTensor::shape).collect()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.value.as_mut_slice().fill(value);
        }
    }

    /// Reads scalar `k` in the flattened (tensor-major) order.
    pub fn flat_get(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.value.len() {
                return t.value.as_slice()[k];
            }
            k -= t.value.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut k: usize, v: f64) {
        for t in &mut self.tensors {
            if k < t.value.len() {
                t.value.as_mut_slice()[k] = v;
                return;
            }
            k -= t.value.len();
        }
        panic!("flat index out of range");
    }

    /// Returns the name of the first tensor holding a NaN/Inf, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors.iter().find(|t| !t.value.is_finite()).map(|t| t.name.as_str())
    }
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Relu,
}

/// Layout of an MLP inside a [`ParamStore`]: `layer_sizes.len() - 1` dense
/// layers starting at tensor `offset` (weight, bias, weight, bias, ...).
/// The activation follows every layer but the last.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub offset: usize,
}

impl Mlp {
    /// Appends freshly initialised layers to `store`.
    ///
    /// Weights are `U[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`; biases
    /// start at zero.
    pub fn append(
        store: &mut ParamStore,
        prefix: &str,
        layer_sizes: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(config(format!(
                "an MLP needs at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(config("layer sizes must be positive"));
        }
        let offset = store.len();
        for (i, w) in layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_in, fan_out);
            for v in weight.as_mut_slice() {
                *v = rng.gen_range(-s..=s);
            }
            store.push(format!("{prefix}layer{i}.weight"), weight);
            store.push(format!("{prefix}layer{i}.bias"), Matrix::zeros(1, fan_out));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), activation, offset })
    }

    /// Recovers the layout of a store built by [`build_mlp`].
    pub fn infer(store: &ParamStore) -> Result<Self> {
        if store.is_empty() || store.len() % 2 != 0 {
            return Err(config("store does not hold (weight, bias) pairs"));
        }
        let mut sizes = Vec::with_capacity(store.len() / 2 + 1);
        sizes.push(store.get(0).rows());
        for l in 0..store.len() / 2 {
            let (w, b) = (store.get(2 * l), store.get(2 * l + 1));
            if w.rows() != *sizes.last().unwrap() || b.shape() != (1, w.cols()) {
                return Err(config(format!("layer {l} shapes are inconsistent")));
            }
            sizes.push(w.cols());
        }
        Ok(Self { layer_sizes: sizes, activation: Activation::Relu, offset: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.layer_sizes.iter().map(ToString::to_string).collect();
        parts.join("-")
    }
}

/// Builds a standalone MLP with the given layer sizes.
pub fn build_mlp(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<ParamStore> {
    let mut store = ParamStore::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::append(&mut store, "", layer_sizes, activation, &mut rng)?;
    Ok(store)
}
