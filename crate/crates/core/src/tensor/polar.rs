//! Euler (polar) decomposition of complex spectra.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::grid::{ComplexGrid, PolarGrid, RealGrid};

/// Phase of `re + i im` in `[-pi, pi)`. The origin maps to 0.
#[inline]
pub fn phase_of<T: Scalar>(re: T, im: T) -> T {
    let mut out = [T::zero()];
    T::phase_slice(&[re], &[im], &mut out);
    out[0]
}

#[inline]
pub fn magnitude_of<T: Scalar>(re: T, im: T) -> T {
    re.hypot(im)
}

fn magnitudes<T: Scalar>(x: &ComplexGrid<T>) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    T::magnitude_slice(&x.re, &x.im, &mut out);
    out
}

fn phases<T: Scalar>(x: &ComplexGrid<T>) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    T::phase_slice(&x.re, &x.im, &mut out);
    out
}

fn cartesian<T: Scalar>(h: usize, w: usize, c: usize, mag: &[T], phase: &[T]) -> ComplexGrid<T> {
    let mut z = ComplexGrid::zeros(h, w, c);
    T::polar_slice(mag, phase, &mut z.re, &mut z.im);
    z
}

pub fn to_polar<T: Scalar>(x: &ComplexGrid<T>) -> PolarGrid<T> {
    PolarGrid {
        height: x.height,
        width: x.width,
        channels: x.channels,
        magnitude: magnitudes(x),
        phase: phases(x),
    }
}

pub fn from_polar<T: Scalar>(p: &PolarGrid<T>) -> ComplexGrid<T> {
    cartesian(p.height, p.width, p.channels, &p.magnitude, &p.phase)
}

pub fn magnitude<T: Scalar>(x: &ComplexGrid<T>) -> RealGrid<T> {
    RealGrid::from_vec(x.height, x.width, x.channels, magnitudes(x))
        .expect("complex grid dims are valid")
}

pub fn phase<T: Scalar>(x: &ComplexGrid<T>) -> RealGrid<T> {
    RealGrid::from_vec(x.height, x.width, x.channels, phases(x)).expect("complex grid dims are valid")
}

/// Recombine separate magnitude and phase grids into Cartesian form.
pub fn combine_polar<T: Scalar>(
    magnitude: &RealGrid<T>,
    phase: &RealGrid<T>,
) -> Result<ComplexGrid<T>> {
    magnitude.ensure_same_dims(phase, "combine_polar")?;
    let (h, w, c) = magnitude.dims();
    Ok(cartesian(h, w, c, magnitude.data(), phase.data()))
}
