//! Sup-norm adaptive kernel density estimation.
//!
//! The estimator family is indexed by a bandwidth vector `h` and a partition `P`
//! of the coordinates: `f̂_{h,P}(x) = ∏_{I∈P} f̃_{h_I}(x_I)`, a product of block
//! marginal kernel estimates. [`selection::select`] picks `(ĥ, P̂)` from a dyadic
//! candidate grid by comparing every candidate against every other through
//! convolution-kernel estimators, penalised by `λ·Â_n`.
//!
//! Crate layout:
//!
//! * [`partitions`] set partitions of the coordinate indices and the meet `⋄`.
//! * [`kernels`] compactly supported even polynomial kernels, convolution profiles.
//! * [`constants`] the explicit threshold constants (`δ*`, `C_s`, `τ_p`, `γ_p`, `π`, `λ`).
//! * [`estimators`] marginal, product and pairwise estimators on an evaluation grid.
//! * [`selection`] candidate grid, the comparison statistic and the joint argmin.
//! * [`harness`] synthetic densities, oracle quantities and Monte Carlo experiments.

// `!(x > 0.0)` is the NaN-rejecting validation idiom used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod data;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod par;
pub mod partitions;
pub mod quadrature;
pub mod selection;

pub use error::{Error, Result};

/// Library version embedded in every output document.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
