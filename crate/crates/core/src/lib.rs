//! Contrastive estimation of density ratios and mutual information.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: a small reverse-mode tape over dense `f64` matrices, MLP
//!   parameter stores, Adam, and finite-difference gradient checking.
//! - [`critics`]: ratio models `r(x, y) > 0` in joint or separable form.
//! - [`scoring`]: proper scoring rules from convex generating functions, the
//!   perspective transform and Bregman divergences.
//! - [`objectives`]: minibatch losses over a `B x B` score matrix (DV, NWJ,
//!   MINE, JS, SMILE, InfoNCE, InfoNCE with an anchor class, scoring-rule
//!   anchored losses, the generalized DV bound, binary DRE losses) together
//!   with their analytic gradients.
//! - [`oracle`]: exact enumeration on finite alphabets, the ground truth used
//!   to validate every estimator.
//!
//! All internal logarithms are natural. Quantities reported in bits are
//! converted with [`nats_to_bits`] at the boundary.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod critics;
pub mod diffcore;
mod error;
pub mod linalg;
pub mod numeric;
pub mod objectives;
pub mod oracle;
pub mod scoring;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use numeric::{bits_to_nats, nats_to_bits};
