//! Differentiable agent-based modelling.
//!
//! Forward-mode dual numbers carry parameter tangents through stochastic
//! simulations whose discrete steps are replaced by smooth surrogates or
//! stochastic-derivative estimators. Three reference models (firms,
//! Sugarscape and a network SIR epidemic) are built on the generic
//! [`ad::Scalar`] carrier, checked against finite differences and
//! calibrated by generalised variational inference.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ad;
pub mod calibration;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod models;
pub mod rng;
pub mod spa;
pub mod stats;
pub mod trajectory;

pub use ad::{Dual, Scalar, SmootherConfig};
pub use error::{Error, Result};
pub use estimators::EstimatorKind;
pub use models::Model;
pub use trajectory::Trajectory;
