//! Hybrid spatial + frequency ℓ1 objective.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::fft::fft2;
use crate::tensor::grid::RealGrid;

/// Mean absolute error over every element.
pub fn loss_spatial<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>) -> Result<f64> {
    h.ensure_same_dims(g, "loss_spatial")?;
    let s: f64 = h
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| (*a - *b).abs().as_f64())
        .sum();
    Ok(s / h.len() as f64)
}

/// Mean complex modulus of the spectrum difference over bins and channels.
pub fn loss_frequency<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>) -> Result<f64> {
    h.ensure_same_dims(g, "loss_frequency")?;
    let d = fft2(h)?.sub(&fft2(g)?)?;
    let s: f64 = d
        .re
        .iter()
        .zip(&d.im)
        .map(|(r, i)| r.hypot(*i).as_f64())
        .sum();
    Ok(s / d.len() as f64)
}

pub fn loss_total<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>, lambda: f64) -> Result<f64> {
    Ok(loss_spatial(h, g)? + lambda * loss_frequency(h, g)?)
}

/// Records `loss_spatial + lambda * loss_frequency` of node `h` against the
/// constant target `g`. The frequency term is skipped when `lambda == 0`.
pub fn record_loss<T: Scalar>(tape: &mut Tape<T>, h: Var, g: &RealGrid<T>, lambda: f64) -> Result<Var> {
    let neg_g = g.map(|v| -v);
    let diff = tape.add_const(h, &neg_g)?;
    let spatial = tape.abs_mean(diff)?;
    if lambda == 0.0 {
        return Ok(spatial);
    }
    let spec = tape.fft2(h)?;
    let spec_diff = tape.sub_const_complex(spec, &fft2(g)?)?;
    let modulus = tape.magnitude(spec_diff)?;
    let freq = tape.mean(modulus)?;
    let weighted = tape.scale(freq, T::of(lambda))?;
    tape.add(spatial, weighted)
}
