//! Dependency estimation with contrastive and Wasserstein objectives.
//!
//! - [`ot`]: exact discrete mutual information and optimal transport.
//! - [`datasets`]: paired image datasets with a closed-form MI certificate.
//! - [`models`], [`objectives`], [`training`]: critics and their optimization.
//! - [`probe`]: linear-probe evaluation of learned representations.
//! - [`cli`]: sweeps and reports behind the `wdm` binary.

pub mod autodiff;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod models;
pub mod objectives;
pub mod ot;
pub mod probe;
pub mod training;

pub use error::{Error, Result};
