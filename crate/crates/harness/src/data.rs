//! Sample sources with known mutual information.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use ratiomi_core::oracle::{exact_kl, DiscretePair};
use ratiomi_core::Matrix;

use crate::config::{BenchmarkConfig, DataKind};
use crate::error::{HarnessError, Result};

/// Per-coordinate correlation giving `bits` of MI over `dim` independent
/// Gaussian coordinate pairs: `sqrt(1 - 2^(-2 bits / dim))`.
pub fn correlation_for_bits(bits: f64, dim: usize) -> f64 {
    (-(-2.0 * bits / dim as f64 * std::f64::consts::LN_2).exp_m1()).sqrt()
}

/// `-(dim / 2) log2(1 - rho^2)`.
pub fn gaussian_mi_bits(rho: f64, dim: usize) -> f64 {
    -(dim as f64) / 2.0 * (-rho * rho).ln_1p() / std::f64::consts::LN_2
}

/// A source of paired minibatches.
#[derive(Debug, Clone)]
pub enum DataSource {
    Gaussian { dim: usize, rho: f64, cubic: bool },
    Discrete { nx: usize, ny: usize, cells: WeightedIndex<f64>, truth_bits: f64 },
}

impl DataSource {
    pub fn from_config(config: &BenchmarkConfig) -> Result<Self> {
        match config.data {
            DataKind::Gaussian | DataKind::GaussianCubic => Ok(DataSource::Gaussian {
                dim: config.dim,
                rho: correlation_for_bits(config.target_mi_bits, config.dim),
                cubic: config.data == DataKind::GaussianCubic,
            }),
            DataKind::Discrete => {
                let table = config
                    .joint_table
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("discrete data needs joint_table".into()))?;
                let m = Matrix::from_rows(table)?;
                let pair = DiscretePair::from_joint(&m)?;
                let cells = WeightedIndex::new(m.as_slice())
                    .map_err(|e| HarnessError::Config(format!("joint_table: {e}")))?;
                Ok(DataSource::Discrete { nx: m.rows(), ny: m.cols(), cells, truth_bits: exact_kl(&pair) })
            }
        }
    }

    /// Input widths of `x` and `y`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            DataSource::Gaussian { dim, .. } => (*dim, *dim),
            DataSource::Discrete { nx, ny, .. } => (*nx, *ny),
        }
    }

    pub fn ground_truth_bits(&self) -> f64 {
        match self {
            DataSource::Gaussian { dim, rho, .. } => gaussian_mi_bits(*rho, *dim),
            DataSource::Discrete { truth_bits, .. } => *truth_bits,
        }
    }

    /// `n` joint draws as row-aligned `(xs, ys)`.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> (Matrix, Matrix) {
        match self {
            DataSource::Gaussian { dim, rho, cubic } => {
                let mut xs = Matrix::zeros(n, *dim);
                let mut ys = Matrix::zeros(n, *dim);
                let noise = (1.0 - rho * rho).sqrt();
                for r in 0..n {
                    for c in 0..*dim {
                        let x: f64 = rng.sample(StandardNormal);
                        let e: f64 = rng.sample(StandardNormal);
                        let y = rho * x + noise * e;
                        xs[(r, c)] = x;
                        ys[(r, c)] = if *cubic { y * y * y } else { y };
                    }
                }
                (xs, ys)
            }
            DataSource::Discrete { nx, ny, cells, .. } => {
                let mut xs = Matrix::zeros(n, *nx);
                let mut ys = Matrix::zeros(n, *ny);
                for r in 0..n {
                    let cell = cells.sample(rng);
                    xs[(r, cell / ny)] = 1.0;
                    ys[(r, cell % ny)] = 1.0;
                }
                (xs, ys)
            }
        }
    }
}

/// `n` draws of the Gaussian source with seed `seed`.
pub fn gen_gaussian_pair(dim: usize, target_mi_bits: f64, cubic: bool, seed: u64, n: usize) -> Result<(Matrix, Matrix)> {
    use rand::SeedableRng;
    if dim == 0 || !(target_mi_bits > 0.0) {
        return Err(HarnessError::Config("need dim >= 1 and target_mi_bits > 0".into()));
    }
    let source = DataSource::Gaussian { dim, rho: correlation_for_bits(target_mi_bits, dim), cubic };
    Ok(source.sample(n, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)))
}
