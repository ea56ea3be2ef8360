//! Deep β-NMF: multilayer nonnegative matrix factorization under β-divergences,
//! with an optional minimum-volume penalty for the KL case.
//!
//! A deep factorization chains `X ≈ W_1 H_1`, `W_1 ≈ W_2 H_2`, …,
//! `W_{L-1} ≈ W_L H_L` and minimizes the weighted sum of the layer
//! divergences. Three solvers are provided:
//!
//! - [`multilayer_factorize`]: the greedy baseline, one layer at a time;
//! - [`deep_factorize`]: block majorization-minimization on all layers with
//!   row-stochastic `H_l`, for β in {0, 1/2, 1, 3/2};
//! - [`minvol_factorize`]: KL with column-stochastic `W_l` and a
//!   `log det(W_l^T W_l + δI)` volume penalty.
//!
//! ```
//! use dbnmf_core::{deep_factorize, synthetic, BetaValue, SolverConfig};
//!
//! let x = synthetic::uniform_matrix(12, 10, 7);
//! let mut config = SolverConfig::new(BetaValue::One, &[4, 2]);
//! config.max_sweeps = 20;
//! config.warm_start_sweeps = 20;
//! let run = deep_factorize(&x, &config, None).unwrap();
//! let objective = run.trace.objectives();
//! assert!(objective.last() <= objective.first());
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod deep;
pub mod divergence;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod minvol;
pub mod model;
pub mod scalar;
pub mod synthetic;
pub mod updates;
pub mod verification;

pub use deep::{deep_factorize, multilayer_factorize, RunDiagnostics, SolveOutput};
pub use divergence::{beta_div_matrix, beta_div_scalar, BetaValue};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use minvol::minvol_factorize;
pub use model::{
    Constraint, ConvergenceTrace, DeepState, LayerSpec, Model, SolverConfig, SweepRecord, Weights,
    EPS_FLOOR,
};
