//! Forward-mode dual numbers, a small reverse tape and the smooth-surrogate
//! vocabulary (step smoothers, tempered softmax, masked conditionals).

mod dual;
mod scalar;
mod smooth;
mod tape;

pub use dual::Dual;
pub use scalar::{sigmoid, Scalar};
pub use smooth::{
    argmax, masked_cond, mix, smooth_step, stop_gradient, surrogate_combine, tempered_softmax,
    SmootherConfig,
};
pub use tape::{Tape, Var};
