//! Branch-free phase and sine/cosine kernels for `f32` slices.
//!
//! Arithmetic runs in `f64` and is rounded once at the end, so results are
//! within one `f32` ulp of the correctly rounded value while the loops stay
//! vectorizable. `f64` grids keep using the standard library.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

const TAN_PI_8: f64 = 0.414_213_562_373_095_03;

/// atan on `[0, 1]`: fold onto `|t| <= tan(pi/8)` and sum the Taylor
/// series through `t^15` (truncation error below 2e-8 before rounding to
/// f32; the f64 use below only needs that level).
#[inline(always)]
fn atan_unit(a: f64) -> f64 {
    let big = a > TAN_PI_8;
    let t = if big { (a - 1.0) / (a + 1.0) } else { a };
    let base = if big { FRAC_PI_4 } else { 0.0 };
    let s = t * t;
    let mut p = -1.0 / 23.0;
    p = p * s + 1.0 / 21.0;
    p = p * s - 1.0 / 19.0;
    p = p * s + 1.0 / 17.0;
    p = p * s - 1.0 / 15.0;
    p = p * s + 1.0 / 13.0;
    p = p * s - 1.0 / 11.0;
    p = p * s + 1.0 / 9.0;
    p = p * s - 1.0 / 7.0;
    p = p * s + 1.0 / 5.0;
    p = p * s - 1.0 / 3.0;
    p = p * s + 1.0;
    base + t * p
}

/// Phase in `[-pi, pi)` with the origin mapped to 0.
#[inline(always)]
pub fn phase_f32(re: f32, im: f32) -> f32 {
    let (x, y) = (re as f64, im as f64);
    let (ax, ay) = (x.abs(), y.abs());
    let mx = ax.max(ay);
    let mn = ax.min(ay);
    let a = if mx > 0.0 { mn / mx } else { 0.0 };
    let mut r = atan_unit(a);
    if ay > ax {
        r = FRAC_PI_2 - r;
    }
    if x < 0.0 {
        r = PI - r;
    }
    if y < 0.0 {
        r = -r;
    }
    let p = r as f32;
    if p >= std::f32::consts::PI {
        -std::f32::consts::PI
    } else {
        p
    }
}

pub fn phase_slice_f32(re: &[f32], im: &[f32], out: &mut [f32]) {
    for ((o, &r), &i) in out.iter_mut().zip(re).zip(im) {
        *o = phase_f32(r, i);
    }
}

/// `(sin x, cos x)` by quadrant reduction and Taylor series on
/// `[-pi/4, pi/4]`. Accurate for `|x| < 1e6`.
#[inline(always)]
pub fn sin_cos_f32(x: f32) -> (f32, f32) {
    let x = x as f64;
    let k = (x * (2.0 / PI)).round();
    // two-part pi/2 keeps the reduction exact to ~1e-20 at these magnitudes
    let r = (x - k * 1.570_796_326_794_896_6) - k * 6.123_233_995_736_766e-17;
    let s = r * r;
    let mut sp = 1.0 / 6_227_020_800.0;
    sp = sp * s - 1.0 / 39_916_800.0;
    sp = sp * s + 1.0 / 362_880.0;
    sp = sp * s - 1.0 / 5_040.0;
    sp = sp * s + 1.0 / 120.0;
    sp = sp * s - 1.0 / 6.0;
    let sin_r = r + r * s * sp;
    let mut cp = 1.0 / 87_178_291_200.0;
    cp = cp * s - 1.0 / 479_001_600.0;
    cp = cp * s + 1.0 / 3_628_800.0;
    cp = cp * s - 1.0 / 40_320.0;
    cp = cp * s + 1.0 / 720.0;
    cp = cp * s - 1.0 / 24.0;
    cp = cp * s + 0.5;
    let cos_r = 1.0 - s * cp;
    // quadrant k mod 4, kept in floating point so the selects vectorize
    let q = k - 4.0 * (k * 0.25).floor();
    let odd = q == 1.0 || q == 3.0;
    let (sn, cs) = if odd { (cos_r, sin_r) } else { (sin_r, cos_r) };
    let sn = if q >= 2.0 { -sn } else { sn };
    let cs = if q == 1.0 || q == 2.0 { -cs } else { cs };
    (sn as f32, cs as f32)
}

/// `sqrt(re^2 + im^2)` evaluated in f64 (no overflow for f32 inputs).
pub fn magnitude_slice_f32(re: &[f32], im: &[f32], out: &mut [f32]) {
    for ((o, &r), &i) in out.iter_mut().zip(re).zip(im) {
        let (r, i) = (r as f64, i as f64);
        *o = (r * r + i * i).sqrt() as f32;
    }
}

/// `re = a cos p`, `im = a sin p`, elementwise.
pub fn polar_to_cartesian_f32(mag: &[f32], phase: &[f32], re: &mut [f32], im: &mut [f32]) {
    for (((r, i), &a), &p) in re.iter_mut().zip(im.iter_mut()).zip(mag).zip(phase) {
        let (s, c) = sin_cos_f32(p);
        *r = a * c;
        *i = a * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_matches_std_atan2() {
        let mut worst = 0.0f64;
        for i in 0..200 {
            for j in 0..200 {
                let re = (i as f32 - 100.0) * 0.37 + 0.01;
                let im = (j as f32 - 100.0) * 0.53 - 0.02;
                let want = (im as f64).atan2(re as f64);
                let got = phase_f32(re, im) as f64;
                worst = worst.max((want - got).abs());
            }
        }
        assert!(worst < 5e-7, "{worst}");
    }

    #[test]
    fn phase_special_points() {
        assert_eq!(phase_f32(0.0, 0.0), 0.0);
        assert_eq!(phase_f32(1.0, 0.0), 0.0);
        assert_eq!(phase_f32(0.0, -2.0), -std::f32::consts::FRAC_PI_2);
        assert_eq!(phase_f32(0.0, 3.0), std::f32::consts::FRAC_PI_2);
        assert_eq!(phase_f32(-1.0, 0.0), -std::f32::consts::PI);
        assert_eq!(phase_f32(-1.0, -0.0), -std::f32::consts::PI);
        assert_eq!(phase_f32(1e-30, 1e30), std::f32::consts::FRAC_PI_2);
    }

    #[test]
    fn sin_cos_matches_std() {
        let mut worst = 0.0f64;
        for i in -5000..5000 {
            let x = i as f32 * 0.0123;
            let (s, c) = sin_cos_f32(x);
            let (ws, wc) = (x as f64).sin_cos();
            worst = worst.max((s as f64 - ws).abs()).max((c as f64 - wc).abs());
        }
        assert!(worst < 1e-7, "{worst}");
        assert_eq!(sin_cos_f32(0.0), (0.0, 1.0));
    }
}
