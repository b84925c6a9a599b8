//! Euler-decoupling neural operator for pansharpening.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: grids, FFTs, polar conversion and neural primitives.
//! * [`autodiff`]: a grid-level reverse-mode tape with a finite-difference checker.
//! * [`operator`]: lifting, the Euler feature interaction layers, projection.
//! * [`metrics`]: the hybrid training loss and the pansharpening metric suite.
//! * [`data`]: synthetic scenes, Wald-protocol degradation, the tensor container.
//! * [`train`]: Adam, the training loop, evaluation and the experiment drivers.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod operator;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
