//! Real/complex grid arithmetic, 2-D Fourier transforms, polar conversion
//! and the small set of neural primitives the operator is built from.

pub mod blocks;
pub mod fastmath;
pub mod fft;
pub mod grid;
pub mod nn;
pub mod polar;
pub mod sample;

pub use blocks::BlockMap;
pub use fft::{fft2, fft2_complex, ifft2, ifft2_complex, ifft2_with_residue};
pub use grid::{ComplexGrid, PolarGrid, RealGrid, Tensor};
pub use nn::{
    conv1x1, conv3x3, depthwise_conv3x3, instance_norm, relu, sigmoid, INSTANCE_NORM_EPS,
};
pub use polar::{from_polar, to_polar};
pub use sample::{bilinear_sample, resize_bicubic, resize_bilinear, Gather4};
