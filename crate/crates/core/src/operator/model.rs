//! The network: lifting, T feature interaction layers, projection and the
//! global residual.
//!
//! Everything is recorded on a [`Tape`]; the eager entry points build a
//! throwaway tape and return the value, so training and inference run the
//! same arithmetic.

use std::f64::consts::PI;
use std::rc::Rc;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::RealGrid;
use crate::tensor::nn::INSTANCE_NORM_EPS;
use crate::tensor::sample::{resize_bilinear, resize_coordinate, Gather4};

use super::config::{Ablation, EdnoConfig};
use super::params::{ParamStore, OFFSET_CHANNELS};
use super::sample::SamplePair;

/// Query geometry for lifting an `lr_h x lr_w` latent onto `out_h x out_w`:
/// the four-neighbour bilinear gather and the per-neighbour fractional
/// offsets `query - neighbour` (row then column, 8 channels).
pub struct LiftGeometry<T> {
    pub gather: Rc<Gather4<T>>,
    pub offsets: RealGrid<T>,
}

impl<T: Scalar> LiftGeometry<T> {
    pub fn new(lr_h: usize, lr_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h < lr_h || out_w < lr_w {
            return Err(Error::shape(format!(
                "lifting target {out_h}x{out_w} is smaller than source {lr_h}x{lr_w}"
            )));
        }
        let gather = Gather4::resize(lr_h, lr_w, out_h, out_w);
        let mut offsets = RealGrid::zeros(out_h, out_w, OFFSET_CHANNELS);
        for i in 0..out_h {
            let r = resize_coordinate(i, lr_h, out_h);
            for j in 0..out_w {
                let c = resize_coordinate(j, lr_w, out_w);
                for (l, &tap) in gather.taps[i * out_w + j].iter().enumerate() {
                    let (ni, nj) = (tap / lr_w, tap % lr_w);
                    offsets.set(i, j, 2 * l, T::of(r - ni as f64));
                    offsets.set(i, j, 2 * l + 1, T::of(c - nj as f64));
                }
            }
        }
        Ok(Self {
            gather: Rc::new(gather),
            offsets,
        })
    }
}

fn conv1x1<T: Scalar>(tape: &mut Tape<T>, params: &ParamStore<T>, key: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{key}.w"))?;
    let b = tape.param(params, &format!("{key}.b"))?;
    tape.conv1x1(x, w, b)
}

fn conv3x3<T: Scalar>(tape: &mut Tape<T>, params: &ParamStore<T>, key: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{key}.w"))?;
    let b = tape.param(params, &format!("{key}.b"))?;
    tape.conv3x3(x, w, b)
}

/// Two 3x3 convolutions with a ReLU between them.
pub fn encode<T: Scalar>(tape: &mut Tape<T>, params: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let h = conv3x3(tape, params, &format!("{prefix}.conv1"), x)?;
    let h = tape.relu(h)?;
    conv3x3(tape, params, &format!("{prefix}.conv2"), h)
}

/// Encode the LR-MS image, gather it onto the output grid with bilinear
/// weights, append the neighbour offsets and mix down to C channels.
pub fn record_lift_ms<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    lrms: Var,
    geometry: &LiftGeometry<T>,
) -> Result<Var> {
    let enc = encode(tape, params, "ms_enc", lrms)?;
    let agg = tape.gather(enc, geometry.gather.clone())?;
    let offsets = tape.input(geometry.offsets.clone());
    let cat = tape.concat(&[agg, offsets])?;
    conv1x1(tape, params, "lift", cat)
}

/// Encode PAN at its own resolution; resample onto the output grid only when
/// the sizes differ.
pub fn record_lift_pan<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    pan: Var,
    target: (usize, usize),
) -> Result<Var> {
    let enc = encode(tape, params, "pan_enc", pan)?;
    let (h, w, _) = tape.real(enc)?.dims();
    if (h, w) == target {
        return Ok(enc);
    }
    let plan = Rc::new(Gather4::resize(h, w, target.0, target.1));
    tape.gather(enc, plan)
}

/// Phase fusion: `(2σ(W[P_pan, P_ms] + b) − 1)π`.
pub fn record_efim<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    t: usize,
    phase_pan: Var,
    phase_ms: Var,
) -> Result<Var> {
    let cat = tape.concat(&[phase_pan, phase_ms])?;
    let mixed = conv1x1(tape, params, &format!("iter{t}.efim"), cat)?;
    let g = tape.sigmoid(mixed)?;
    tape.affine(g, T::of(2.0 * PI), T::of(-PI))
}

/// Magnitude fusion: `relu(W_proj relu(W_dw relu(IN(W_mix [A_pan, A_ms]))))`,
/// the outer ReLU being the clamp that keeps magnitudes non-negative.
pub fn record_ifim<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    t: usize,
    mag_pan: Var,
    mag_ms: Var,
    depthwise: bool,
) -> Result<Var> {
    let cat = tape.concat(&[mag_pan, mag_ms])?;
    let mixed = conv1x1(tape, params, &format!("iter{t}.ifim.mix"), cat)?;
    let normed = tape.instance_norm(mixed, INSTANCE_NORM_EPS)?;
    let mut h = tape.relu(normed)?;
    if depthwise {
        let k = tape.param(params, &format!("iter{t}.ifim.dw"))?;
        let d = tape.depthwise3x3(h, k)?;
        h = tape.relu(d)?;
    }
    let proj = conv1x1(tape, params, &format!("iter{t}.ifim.proj"), h)?;
    tape.relu(proj)
}

/// PAN-side spectral quantities shared by every layer.
pub struct PanSpectrum {
    pub features: Var,
    pub magnitude: Option<Var>,
    pub phase: Option<Var>,
}

impl PanSpectrum {
    pub fn record<T: Scalar>(tape: &mut Tape<T>, features: Var, ablation: Ablation) -> Result<Self> {
        if ablation == Ablation::VanillaFno {
            return Ok(Self {
                features,
                magnitude: None,
                phase: None,
            });
        }
        let spec = tape.fft2(features)?;
        let magnitude = if ablation.uses_magnitude_fusion() {
            Some(tape.magnitude(spec)?)
        } else {
            None
        };
        let phase = if ablation.uses_phase_fusion() {
            Some(tape.phase(spec)?)
        } else {
            None
        };
        Ok(Self {
            features,
            magnitude,
            phase,
        })
    }
}

/// One Euler feature interaction layer: FFT, polar split, phase and
/// magnitude fusion, Euler recombination and inverse FFT.
pub fn record_efil<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    t: usize,
    ablation: Ablation,
    z: Var,
    pan: &PanSpectrum,
) -> Result<Var> {
    if ablation == Ablation::VanillaFno {
        let cat = tape.concat(&[pan.features, z])?;
        let spec = tape.fft2(cat)?;
        let wr = tape.param(params, &format!("iter{t}.spectral.wr"))?;
        let wi = tape.param(params, &format!("iter{t}.spectral.wi"))?;
        let mixed = tape.complex_conv1x1(spec, wr, wi)?;
        return tape.ifft2(mixed);
    }
    let spec = tape.fft2(z)?;
    let mag_z = tape.magnitude(spec)?;
    let phase_z = tape.phase(spec)?;
    let phase = match pan.phase {
        Some(p) => record_efim(tape, params, t, p, phase_z)?,
        None => phase_z,
    };
    let mag = match pan.magnitude {
        Some(m) => record_ifim(tape, params, t, m, mag_z, ablation.uses_depthwise())?,
        None => mag_z,
    };
    let fused = tape.from_polar(mag, phase)?;
    tape.ifft2(fused)
}

/// Records the whole network and returns the unclamped output node.
pub fn record_forward<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
    sample: &SamplePair<T>,
) -> Result<Var> {
    sample.validate()?;
    if sample.bands() != cfg.bands {
        return Err(Error::shape(format!(
            "model expects {} bands, sample has {}",
            cfg.bands,
            sample.bands()
        )));
    }
    let target = sample.target_dims();
    let (lh, lw, _) = sample.lrms.dims();
    let geometry = LiftGeometry::new(lh, lw, target.0, target.1)?;
    let lrms = tape.input(sample.lrms.clone());
    let pan = tape.input(sample.pan.clone());

    let mut z = record_lift_ms(tape, params, lrms, &geometry)?;
    let pan_features = record_lift_pan(tape, params, pan, target)?;
    let pan_spec = PanSpectrum::record(tape, pan_features, cfg.ablation)?;
    for t in 0..cfg.iterations {
        let k = record_efil(tape, params, t, cfg.ablation, z, &pan_spec)?;
        z = if t + 1 < cfg.iterations {
            let skip = conv1x1(tape, params, &format!("iter{t}.skip"), z)?;
            let s = tape.add(skip, k)?;
            tape.relu(s)?
        } else {
            k
        };
    }
    let projected = conv1x1(tape, params, "proj", z)?;
    let upsampled = resize_bilinear(&sample.lrms, target.0, target.1)?;
    tape.add_const(projected, &upsampled)
}

/// Unclamped network output.
pub fn forward<T: Scalar>(
    sample: &SamplePair<T>,
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
) -> Result<RealGrid<T>> {
    let mut tape = Tape::new();
    let out = record_forward(&mut tape, params, cfg, sample)?;
    Ok(tape.real(out)?.clone())
}

/// Network output clamped to the valid intensity range `[0, 1]`.
pub fn predict<T: Scalar>(
    sample: &SamplePair<T>,
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
) -> Result<RealGrid<T>> {
    Ok(forward(sample, params, cfg)?.clamp(T::zero(), T::one()))
}

/// Eager lifting of an LR-MS image onto a `target` grid.
pub fn lift_ms<T: Scalar>(
    lrms: &RealGrid<T>,
    target: (usize, usize),
    params: &ParamStore<T>,
) -> Result<RealGrid<T>> {
    let geometry = LiftGeometry::new(lrms.height(), lrms.width(), target.0, target.1)?;
    let mut tape = Tape::new();
    let x = tape.input(lrms.clone());
    let out = record_lift_ms(&mut tape, params, x, &geometry)?;
    Ok(tape.real(out)?.clone())
}

/// Eager PAN encoding, resampled to `target` when sizes differ.
pub fn lift_pan<T: Scalar>(
    pan: &RealGrid<T>,
    target: (usize, usize),
    params: &ParamStore<T>,
) -> Result<RealGrid<T>> {
    let mut tape = Tape::new();
    let x = tape.input(pan.clone());
    let out = record_lift_pan(&mut tape, params, x, target)?;
    Ok(tape.real(out)?.clone())
}

/// Eager phase fusion for layer `t`.
pub fn efim<T: Scalar>(
    phase_pan: &RealGrid<T>,
    phase_ms: &RealGrid<T>,
    params: &ParamStore<T>,
    t: usize,
) -> Result<RealGrid<T>> {
    phase_pan.ensure_same_dims(phase_ms, "efim")?;
    let mut tape = Tape::new();
    let a = tape.input(phase_pan.clone());
    let b = tape.input(phase_ms.clone());
    let out = record_efim(&mut tape, params, t, a, b)?;
    Ok(tape.real(out)?.clone())
}

/// Eager magnitude fusion for layer `t`.
pub fn ifim<T: Scalar>(
    mag_pan: &RealGrid<T>,
    mag_ms: &RealGrid<T>,
    params: &ParamStore<T>,
    t: usize,
    no_depthwise: bool,
) -> Result<RealGrid<T>> {
    mag_pan.ensure_same_dims(mag_ms, "ifim")?;
    let mut tape = Tape::new();
    let a = tape.input(mag_pan.clone());
    let b = tape.input(mag_ms.clone());
    let out = record_ifim(&mut tape, params, t, a, b, !no_depthwise)?;
    Ok(tape.real(out)?.clone())
}

/// Eager feature interaction layer `t`.
pub fn efil<T: Scalar>(
    z: &RealGrid<T>,
    pan_features: &RealGrid<T>,
    params: &ParamStore<T>,
    t: usize,
    cfg: &EdnoConfig,
) -> Result<RealGrid<T>> {
    z.ensure_same_dims(pan_features, "efil")?;
    let mut tape = Tape::new();
    let zv = tape.input(z.clone());
    let fv = tape.input(pan_features.clone());
    let pan = PanSpectrum::record(&mut tape, fv, cfg.ablation)?;
    let out = record_efil(&mut tape, params, t, cfg.ablation, zv, &pan)?;
    Ok(tape.real(out)?.clone())
}
