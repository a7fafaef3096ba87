//! Complex-valued neural networks and the norm machinery used to bound
//! their generalization error.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: complex matrices, entrywise/(p,q)/spectral norms and a
//!   dense real-embedding oracle.
//! * [`activations`]: split-tanh, CReLU, modReLU and amplitude-tanh with
//!   their Jacobians and Lipschitz constants.
//! * [`network`]: layered CVNNs, forward/backward passes, SGD with
//!   momentum and JSON checkpoints.
//! * [`spectral`]: per-layer spectral and (2,1) norms, spectral complexity
//!   and the closed-form generalization bounds.
//! * [`covering`]: executable Maurey sparsification and matrix-cover checks.
//! * [`stats`]: excess risk and Spearman rank correlation.
//! * [`datasets`]: IDX loading, complexification and synthetic regression.

pub mod activations;
pub mod covering;
pub mod datasets;
mod error;
pub mod kv;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{CMatrix, Complex, RMatrix};
