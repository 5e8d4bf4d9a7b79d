//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! [`Tape`] records primitive matrix operations; [`Tape::backward`] returns
//! gradients aligned with a [`ParamStore`]. [`Adam`] updates the store and
//! [`finite_diff_check`] verifies analytic gradients by central differences.

mod check;
mod optim;
mod params;
mod tape;

pub use check::{finite_diff_check, finite_diff_vector, relative_error, FULL_CHECK_LIMIT};
pub use optim::{Adam, AdamConfig};
pub use params::{build_mlp, Activation, Mlp, NamedTensor, ParamStore};
pub use tape::{Gradients, NodeId, Tape};

use crate::{Matrix, Result};

/// Runs the MLP held in `params` (as laid out by [`build_mlp`]) on `input`.
/// Returns the output together with the tape and the output node.
pub fn forward(params: &ParamStore, input: &Matrix) -> Result<(Matrix, Tape, NodeId)> {
    let mlp = Mlp::infer(params)?;
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let out = tape.mlp(params, &mlp, x)?;
    Ok((tape.value(out).clone(), tape, out))
}
