//! Dense matrices, reverse-mode differentiation and the Adam optimiser.

mod adam;
mod array;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use array::Array;
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};

pub(crate) use tape::logsumexp;

use num_traits::Float;
use std::fmt::Debug;

/// Floating-point element type of an [`Array`]: `f64` for checks, `f32`
/// for training throughput.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self;
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
}
