//! Dense multilayer perceptrons with hand-written backpropagation.
//!
//! Arrays are batch-major: inputs and activations have shape
//! `(batch, features)`, weights have shape `(inputs, outputs)`.

mod adam;
mod io;
mod mlp;

pub use adam::Adam;
pub use io::{read_net, write_net, NetFile};
pub use mlp::{Activation, Dense, Grads, Mlp, Trace};

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Floating-point element type of a network. Training runs in `f32`,
/// gradient checks in `f64`.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn c(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    fn c(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}
