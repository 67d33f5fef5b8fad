//! Reference agent-based models built on the generic [`Scalar`] carrier.

pub mod axtell;
pub mod beta;
pub mod graph;
pub mod sir;
pub mod sugarscape;

use crate::ad::Scalar;
use crate::error::Result;
use crate::estimators::EstimatorKind;
use crate::trajectory::Trajectory;

/// A stochastic simulator `θ ↦ Φ(x)` whose runs are reproducible from
/// `(seed, replicate)`. Running it with `f64` gives the plain model; with a
/// dual carrier the same draws produce the same primal plus tangents.
pub trait Model: Sync {
    fn name(&self) -> &'static str;

    fn param_names(&self) -> Vec<String>;

    fn output_names(&self) -> Vec<&'static str>;

    /// Parameter point the model was configured with.
    fn theta(&self) -> Vec<f64>;

    /// Default central-difference step for parameter `i`.
    fn fd_epsilon(&self, i: usize) -> f64;

    /// Closed support `(lo, hi)` of parameter `i`.
    fn support(&self, i: usize) -> (f64, f64);

    fn simulate<S: Scalar>(
        &self,
        theta: &[S],
        est: &EstimatorKind,
        seed: u64,
        replicate: u64,
    ) -> Result<Trajectory<S>>;
}

pub(crate) fn check_len<T>(theta: &[T], expected: usize) -> Result<()> {
    if theta.len() != expected {
        return Err(crate::error::Error::DimensionMismatch {
            expected,
            got: theta.len(),
        });
    }
    Ok(())
}
