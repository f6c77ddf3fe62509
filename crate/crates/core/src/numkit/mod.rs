//! Minimal numeric kernel for the fixed model graphs used in this crate.
//!
//! There is no general autodiff here. Each layer exposes a forward function
//! and a matching backward function, and the model modules wire them by hand.
//! Every kernel is generic over [`Scalar`] so that gradient checks can run
//! the exact same code in 64-bit while training runs in 32-bit.

mod adam;
pub mod gradcheck;
mod layers;
mod loss;
mod rng;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use adam::{Adam, Parameter};
pub use layers::{
    conv2d, conv2d_backward, dropout, fully_connected, fully_connected_backward, max_over_positions,
    max_over_positions_backward, relu, relu_backward, sigmoid, sigmoid_backward, Conv2dGrads, DenseGrads, MaxPool,
};
pub use loss::{bce_loss, bce_loss_backward, mse, mse_backward, ratio_loss, ratio_loss_backward, BCE_EPSILON};
pub use rng::Rng;
pub use tensor::Tensor;

/// Floating point element type accepted by every kernel.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid argument to {op}: {detail}")]
    Argument { op: &'static str, detail: String },
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NumError {
    NumError::Shape {
        op,
        detail: detail.into(),
    }
}
