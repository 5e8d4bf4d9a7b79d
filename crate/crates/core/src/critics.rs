//! Parameterised ratio models `r_theta`.
//!
//! A *joint* critic scores a pair by running the concatenation `[x; y]`
//! through one MLP ending in a scalar. A *separable* critic embeds `x` and
//! `y` with two towers and scores their cosine similarity divided by the
//! temperature. The raw score is turned into a positive ratio either by
//! `exp` (PMI form) or by `softplus` (PD form).

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
use crate::numeric::Float;
use crate::diffcore::{Activation, Gradients, Mlp, NodeId, ParamStore, Tape};
use crate::error::{config, numeric, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CriticKind {
    #[default]
    Joint,
    Separable,
}

/// How the raw critic output becomes a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OutputForm {
    /// `r = exp(c)`: the raw output models the pointwise mutual information.
    #[default]
    PmiExp,
    /// `r = softplus(c) + PD_FLOOR`: the raw output models the ratio
    /// directly, made positive by the softplus.
    PdDirect,
}

/// Added to the PD-form softplus so the ratio stays representable when the
/// softplus underflows.
pub const PD_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CriticSpec {
    pub kind: CriticKind,
    pub form: OutputForm,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    /// Divides the cosine similarity of separable critics; unused by joint ones.
    pub temperature: f64,
}

impl Default for CriticSpec {
    fn default() -> Self {
        Self {
            kind: CriticKind::Joint,
            form: OutputForm::PmiExp,
            embed_dim: 16,
            hidden: alloc::vec![512, 512],
            temperature: 0.2,
        }
    }
}

impl CriticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.embed_dim == 0 {
            return Err(config("embed_dim must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(config("hidden layer sizes must be positive"));
        }
        Ok(())
    }

    fn tower(&self, input: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.embed_dim);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Towers {
    Joint(Mlp),
    Separable { f: Mlp, g: Mlp },
}

/// A critic specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    spec: CriticSpec,
    x_dim: usize,
    y_dim: usize,
    params: ParamStore,
    towers: Towers,
}

/// Positive `B x B` matrix with entry `(b, j) = r(x_b, y_j)`, kept on both
/// the ratio and the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Matrix,
    log_values: Matrix,
}

impl ScoreMatrix {
    /// Builds the matrix from log-scores.
    pub fn from_log(log_values: Matrix) -> Result<Self> {
        if log_values.rows() != log_values.cols() {
            return Err(Error::Dimension {
                op: "score matrix",
                expected: (log_values.rows(), log_values.rows()),
                found: log_values.shape(),
            });
        }
        if !log_values.is_finite() {
            return Err(numeric(format!(
                "non-finite log-score (max |log r| = {})",
                log_values.max_abs()
            )));
        }
        let values = log_values.map(f64::exp);
        if values.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(numeric(format!(
                "scores leave the positive finite range (max |log r| = {})",
                log_values.max_abs()
            )));
        }
        Ok(Self { values, log_values })
    }

    /// Builds the matrix from strictly positive ratio-scale scores.
    pub fn from_values(values: Matrix) -> Result<Self> {
        if values.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(numeric("ratio-scale scores must be positive and finite"));
        }
        let log_values = values.map(f64::ln);
        if values.rows() != values.cols() {
            return Err(Error::Dimension {
                op: "score matrix",
                expected: (values.rows(), values.rows()),
                found: values.shape(),
            });
        }
        Ok(Self { values, log_values })
    }

    pub fn batch_size(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn log_values(&self) -> &Matrix {
        &self.log_values
    }

    pub fn value(&self, b: usize, j: usize) -> f64 {
        self.values[(b, j)]
    }

    pub fn log_value(&self, b: usize, j: usize) -> f64 {
        self.log_values[(b, j)]
    }
}

/// A score matrix and the tape that produced it, ready for backpropagation.
#[derive(Debug)]
pub struct ScoredBatch {
    pub scores: ScoreMatrix,
    tape: Tape,
    log_node: NodeId,
}

impl ScoredBatch {
    /// Parameter gradients of a loss whose value and gradient with respect to
    /// the log-scores are known.
    pub fn gradients(mut self, loss: f64, grad_log: Matrix) -> Result<Gradients> {
        let node = self.tape.linearized(self.log_node, loss, grad_log)?;
        self.tape.backward(node)
    }
}

/// Per-input scores of a single-input critic.
#[derive(Debug)]
pub struct ScoredInputs {
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    tape: Tape,
    log_node: NodeId,
}

impl ScoredInputs {
    pub fn gradients(mut self, loss: f64, grad_log: &[f64]) -> Result<Gradients> {
        let grad = Matrix::from_vec(grad_log.len(), 1, grad_log.to_vec())?;
        let node = self.tape.linearized(self.log_node, loss, grad)?;
        self.tape.backward(node)
    }
}

impl Critic {
    /// Initialises a critic for inputs of width `x_dim` and `y_dim`. A joint
    /// critic with `y_dim = 0` scores single inputs.
    pub fn new(spec: CriticSpec, x_dim: usize, y_dim: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if x_dim == 0 {
            return Err(config("x_dim must be positive"));
        }
        let mut params = ParamStore::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let towers = match spec.kind {
            CriticKind::Joint => {
                let mut sizes = spec.tower(x_dim + y_dim);
                sizes.push(1);
                Towers::Joint(Mlp::append(&mut params, "", &sizes, Activation::Relu, &mut rng)?)
            }
            CriticKind::Separable => {
                if y_dim == 0 {
                    return Err(config("a separable critic needs y_dim > 0"));
                }
                let f = Mlp::append(&mut params, "f.", &spec.tower(x_dim), Activation::Relu, &mut rng)?;
                let g = Mlp::append(&mut params, "g.", &spec.tower(y_dim), Activation::Relu, &mut rng)?;
                Towers::Separable { f, g }
            }
        };
        Ok(Self { spec, x_dim, y_dim, params, towers })
    }

    pub fn spec(&self) -> &CriticSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.x_dim, self.y_dim)
    }

    /// Scores every pair `(x_b, y_j)` of the batch.
    pub fn score_matrix(&self, xs: &Matrix, ys: &Matrix) -> Result<ScoredBatch> {
        self.score_matrix_with(&self.params, xs, ys)
    }

    /// [`Critic::score_matrix`] evaluated at other parameters of the same shapes.
    pub fn score_matrix_with(&self, params: &ParamStore, xs: &Matrix, ys: &Matrix) -> Result<ScoredBatch> {
        let batch = xs.rows();
        if batch < 2 {
            return Err(Error::Batch { needed: 2, found: batch });
        }
        if ys.rows() != batch {
            return Err(Error::Dimension { op: "score_matrix", expected: (batch, self.y_dim), found: ys.shape() });
        }
        self.check_cols("score_matrix x", xs, self.x_dim)?;
        self.check_cols("score_matrix y", ys, self.y_dim)?;
        let mut tape = Tape::new();
        let x = tape.input(xs.clone());
        let y = tape.input(ys.clone());
        let raw = match &self.towers {
            Towers::Joint(mlp) => {
                let pairs = tape.pair_concat(x, y);
                let out = tape.mlp(params, mlp, pairs)?;
                tape.reshape(out, batch, batch)?
            }
            Towers::Separable { f, g } => {
                let fx = tape.mlp(params, f, x)?;
                let gy = tape.mlp(params, g, y)?;
                let fx = tape.normalize_rows(fx)?;
                let gy = tape.normalize_rows(gy)?;
                let cos = tape.matmul_bt(fx, gy)?;
                tape.scale(cos, 1.0 / self.spec.temperature)
            }
        };
        let log_node = self.positive_log(&mut tape, raw);
        let scores = ScoreMatrix::from_log(tape.value(log_node).clone())?;
        Ok(ScoredBatch { scores, tape, log_node })
    }

    /// Scores single inputs with a joint critic built with `y_dim = 0`.
    pub fn score_single(&self, xs: &Matrix) -> Result<ScoredInputs> {
        self.score_single_with(&self.params, xs)
    }

    pub fn score_single_with(&self, params: &ParamStore, xs: &Matrix) -> Result<ScoredInputs> {
        let Towers::Joint(mlp) = &self.towers else {
            return Err(config("score_single needs a joint critic"));
        };
        if self.y_dim != 0 {
            return Err(config("score_single needs a critic built with y_dim = 0"));
        }
        if xs.rows() == 0 {
            return Err(Error::Batch { needed: 1, found: 0 });
        }
        self.check_cols("score_single", xs, self.x_dim)?;
        let mut tape = Tape::new();
        let x = tape.input(xs.clone());
        let raw = tape.mlp(params, mlp, x)?;
        let log_node = self.positive_log(&mut tape, raw);
        let log_values = tape.value(log_node).as_slice().to_vec();
        if log_values.iter().any(|v| !v.is_finite()) {
            return Err(numeric("non-finite single-input score"));
        }
        let values = log_values.iter().map(|v| v.exp()).collect();
        Ok(ScoredInputs { values, log_values, tape, log_node })
    }

    /// Normalised embeddings `(f(x), g(y))` of a separable critic.
    pub fn embeddings(&self, xs: &Matrix, ys: &Matrix) -> Result<(Matrix, Matrix)> {
        let Towers::Separable { f, g } = &self.towers else {
            return Err(config("embeddings are defined for separable critics only"));
        };
        let mut tape = Tape::new();
        let x = tape.input(xs.clone());
        let y = tape.input(ys.clone());
        let fx = tape.mlp(&self.params, f, x)?;
        let gy = tape.mlp(&self.params, g, y)?;
        let fx = tape.normalize_rows(fx)?;
        let gy = tape.normalize_rows(gy)?;
        Ok((tape.value(fx).clone(), tape.value(gy).clone()))
    }

    fn positive_log(&self, tape: &mut Tape, raw: NodeId) -> NodeId {
        match self.spec.form {
            OutputForm::PmiExp => raw,
            OutputForm::PdDirect => tape.log_softplus_floor(raw, PD_FLOOR),
        }
    }

    fn check_cols(&self, op: &'static str, m: &Matrix, cols: usize) -> Result<()> {
        if m.cols() != cols {
            return Err(Error::Dimension { op, expected: (m.rows(), cols), found: m.shape() });
        }
        Ok(())
    }
}
