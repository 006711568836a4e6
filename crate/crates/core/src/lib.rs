//! Adversarially perturbed precision-matrix estimation.
//!
//! The estimators minimize `-log det C + E[max_{‖Δ‖ ≤ δ} (x + Δ)ᵀ C (x + Δ)]`
//! over positive-definite `C`:
//!
//! * [`shrinkage`] solves the ℓ2-perturbed problem through its dual form,
//!   which coincides with Wasserstein shrinkage;
//! * [`glasso`] solves the convex ℓ∞ surrogate, a weighted graphical lasso
//!   with scale-adaptive penalties, by proximal Newton;
//! * [`adversary`] evaluates the inner maximization exactly (ℓ2, small-d ℓ∞)
//!   or through its surrogate and small-δ expansion.
//!
//! [`diagnostics`], [`asymptotics`], [`selection`] and [`experiments`] build
//! the model-selection theory checks, Monte-Carlo studies and replication
//! drivers on top.

// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod asymptotics;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod glasso;
pub mod matrix;
pub mod selection;
pub mod shrinkage;
pub mod synth;

pub use data::Dataset;
pub use error::{Error, Result};
pub use matrix::{EigenDecomposition, LowerFactor, Mat, SymMatrix, SymPd};
