//! Wald-protocol degradation: Gaussian low-pass, then sampling at the
//! centres of the low-resolution pixels.
//!
//! LR pixel `k` of an axis reduced from `n` to `m` samples sits at HR
//! coordinate `(k + 0.5) n / m - 0.5`, the same pixel-centre mapping the
//! bilinear upsampler inverts. For an integer ratio `r` that is
//! `r k + (r - 1) / 2`, the centre of the `r x r` block. The Gaussian is
//! evaluated at that exact (possibly half-integer) position, so blur and
//! decimation are one separable weighted sum.

use crate::error::{Error, Result};
use crate::operator::sample::{scaled_len, SamplePair};
use crate::scalar::Scalar;
use crate::tensor::grid::RealGrid;
use crate::tensor::sample::resize_bilinear;

/// Number of standard deviations kept on each side of the kernel.
pub const TRUNCATE_SIGMAS: f64 = 4.0;

/// Default blur for ratio `r`.
pub fn wald_sigma(scale: f64) -> f64 {
    scale / 2.0
}

/// `round(n / scale)`, at least 1.
pub fn reduced_len(n: usize, scale: f64) -> usize {
    ((n as f64 / scale).round() as usize).max(1)
}

/// Mirror any integer index into `0..n` (reflection without repeating the
/// edge sample, periodic with period `2(n-1)`).
pub fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Sparse rows of the 1-D blur-and-sample operator from `n` to `m` samples.
pub fn axis_taps(n: usize, m: usize, sigma: f64) -> Vec<Vec<(usize, f64)>> {
    (0..m)
        .map(|k| {
            let c = (k as f64 + 0.5) * n as f64 / m as f64 - 0.5;
            if sigma <= 1e-12 {
                // degenerate blur: linear interpolation at the centre
                let lo = c.floor();
                let f = c - lo;
                let i0 = mirror(lo as isize, n);
                if f == 0.0 {
                    return vec![(i0, 1.0)];
                }
                return vec![(i0, 1.0 - f), (mirror(lo as isize + 1, n), f)];
            }
            let reach = TRUNCATE_SIGMAS * sigma;
            let lo = (c - reach).ceil() as isize;
            let hi = (c + reach).floor() as isize;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|j| {
                    let d = j as f64 - c;
                    (mirror(j, n), (-d * d / (2.0 * sigma * sigma)).exp())
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Blur with a Gaussian of standard deviation `sigma` (HR pixels) and sample
/// onto an `out_h x out_w` grid.
pub fn blur_decimate<T: Scalar>(
    x: &RealGrid<T>,
    out_h: usize,
    out_w: usize,
    sigma: f64,
) -> Result<RealGrid<T>> {
    let (h, w, c) = x.dims();
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return Err(Error::Dimension(format!(
            "cannot reduce {h}x{w} to {out_h}x{out_w}"
        )));
    }
    let col_taps = axis_taps(w, out_w, sigma);
    let row_taps = axis_taps(h, out_h, sigma);
    let xd = x.data();
    // horizontal pass: h x out_w, kept in f64
    let mut mid = vec![0.0f64; h * out_w * c];
    for i in 0..h {
        for (k, taps) in col_taps.iter().enumerate() {
            let dst = &mut mid[(i * out_w + k) * c..(i * out_w + k + 1) * c];
            for &(j, wt) in taps {
                let src = &xd[(i * w + j) * c..(i * w + j + 1) * c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wt * s.as_f64();
                }
            }
        }
    }
    let mut out = vec![0.0f64; out_h * out_w * c];
    for (k, taps) in row_taps.iter().enumerate() {
        let dst = &mut out[k * out_w * c..(k + 1) * out_w * c];
        for &(i, wt) in taps {
            let src = &mid[i * out_w * c..(i + 1) * out_w * c];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    RealGrid::from_vec(out_h, out_w, c, out.into_iter().map(T::of).collect())
}

/// Equal-weight mean of all bands, as a one-channel grid.
pub fn band_mean<T: Scalar>(x: &RealGrid<T>) -> RealGrid<T> {
    let (h, w, c) = x.dims();
    let data = x
        .data()
        .chunks_exact(c)
        .map(|px| T::of(px.iter().map(|v| v.as_f64()).sum::<f64>() / c as f64))
        .collect();
    RealGrid::from_vec(h, w, 1, data).expect("band mean dims")
}

/// Build a reduced-resolution training pair from a full-resolution scene:
/// LR-MS by blur and decimation at ratio `scale`, PAN as the band mean.
pub fn wald_degrade<T: Scalar>(gt: &RealGrid<T>, scale: f64, sigma: f64) -> Result<SamplePair<T>> {
    if !(scale.is_finite() && scale >= 1.0) {
        return Err(Error::Dimension(format!("scale must be >= 1, got {scale}")));
    }
    let (h, w, _) = gt.dims();
    let (lh, lw) = (reduced_len(h, scale), reduced_len(w, scale));
    if scaled_len(lh, scale) != h || scaled_len(lw, scale) != w {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not a whole multiple of ratio {scale}"
        )));
    }
    let lrms = blur_decimate(gt, lh, lw, sigma)?;
    let pan = band_mean(gt);
    SamplePair::new(pan, lrms, Some(gt.clone()), scale)
}

/// Resample the PAN image to `round((1 + jitter) * size)`; LR-MS and the
/// output grid are untouched.
pub fn jitter_scale<T: Scalar>(sample: &SamplePair<T>, jitter: f64) -> Result<SamplePair<T>> {
    if !(jitter.abs() < 0.5) {
        return Err(Error::config(format!("jitter must satisfy |j| < 0.5, got {jitter}")));
    }
    if jitter == 0.0 {
        return Ok(sample.clone());
    }
    let (h, w, _) = sample.pan.dims();
    let nh = scaled_len(h, 1.0 + jitter);
    let nw = scaled_len(w, 1.0 + jitter);
    let mut out = sample.clone();
    out.pan = resize_bilinear(&sample.pan, nh, nw)?;
    out.pan_jitter = sample.pan_jitter + jitter;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_reflects_without_repeating_edges() {
        let got: Vec<usize> = (-4..9).map(|i| mirror(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(mirror(-7, 1), 0);
    }

    #[test]
    fn taps_are_normalized_and_centred() {
        for taps in axis_taps(32, 8, 2.0) {
            let s: f64 = taps.iter().map(|t| t.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let t = axis_taps(8, 8, 0.0);
        assert!(t.iter().enumerate().all(|(k, taps)| taps == &vec![(k, 1.0)]));
    }

    #[test]
    fn unit_ratio_without_blur_is_identity() {
        let x = RealGrid::<f64>::from_fn(6, 5, 2, |h, w, c| (h * 5 + w + c) as f64 * 0.01);
        let y = blur_decimate(&x, 6, 5, 0.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn jitter_arithmetic() {
        let gt = RealGrid::<f32>::filled(256, 256, 4, 0.5);
        let s = wald_degrade(&gt, 4.0, 2.0).unwrap();
        let j = jitter_scale(&s, 0.05).unwrap();
        assert_eq!((j.pan.height(), j.pan.width()), (269, 269));
        assert_eq!(j.target_dims(), (256, 256));
        assert_eq!(jitter_scale(&s, 0.0).unwrap(), s);
        assert!(jitter_scale(&s, 0.5).is_err());
    }

    #[test]
    fn non_multiple_sizes_are_rejected() {
        let gt = RealGrid::<f32>::zeros(130, 128, 1);
        assert!(matches!(wald_degrade(&gt, 4.0, 2.0), Err(Error::Dimension(_))));
    }
}
