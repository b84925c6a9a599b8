//! Floating-point element type shared by every grid, parameter and tape.
//!
//! Training runs in `f32`; `f64` exists for finite-difference gradient
//! checks and for oracle comparisons that need tighter tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

pub trait Scalar:
    Float + FloatConst + NumAssign + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Row/column-strided general matrix multiply:
    /// `C <- alpha * A(m x k) * B(k x n) + beta * C(m x n)`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// Elementwise phase in `[-pi, pi)`; the origin maps to 0.
    fn phase_slice(re: &[Self], im: &[Self], out: &mut [Self]) {
        for ((o, &r), &i) in out.iter_mut().zip(re).zip(im) {
            *o = if r == Self::zero() && i == Self::zero() {
                Self::zero()
            } else {
                let p = i.atan2(r);
                if p >= Self::PI() {
                    -Self::PI()
                } else {
                    p
                }
            };
        }
    }

    /// Elementwise complex modulus.
    fn magnitude_slice(re: &[Self], im: &[Self], out: &mut [Self]) {
        for ((o, &r), &i) in out.iter_mut().zip(re).zip(im) {
            *o = r.hypot(i);
        }
    }

    /// Elementwise `re = a cos p`, `im = a sin p`.
    fn polar_slice(mag: &[Self], phase: &[Self], re: &mut [Self], im: &mut [Self]) {
        for (((r, i), &a), &p) in re.iter_mut().zip(im.iter_mut()).zip(mag).zip(phase) {
            let (s, c) = p.sin_cos();
            *r = a * c;
            *i = a * s;
        }
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "gemm operand {what} out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $prec:expr, $gemm:path $(, $extra:item)*) => {
        impl Scalar for $t {
            $($extra)*

            const PRECISION: Precision = $prec;

            #[inline(always)]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline(always)]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa, "A");
                check_extent(b.len(), k, n, rsb, csb, "B");
                check_extent(c.len(), m, n, rsc, csc, "C");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(
    f32,
    Precision::F32,
    matrixmultiply::sgemm,
    fn phase_slice(re: &[f32], im: &[f32], out: &mut [f32]) {
        crate::tensor::fastmath::phase_slice_f32(re, im, out)
    },
    fn polar_slice(mag: &[f32], phase: &[f32], re: &mut [f32], im: &mut [f32]) {
        crate::tensor::fastmath::polar_to_cartesian_f32(mag, phase, re, im)
    },
    fn magnitude_slice(re: &[f32], im: &[f32], out: &mut [f32]) {
        crate::tensor::fastmath::magnitude_slice_f32(re, im, out)
    }
);
impl_scalar!(f64, Precision::F64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        f64::gemm(m, k, n, 1.0, &a, k as isize, 1, &b, n as isize, 1, 0.0, &mut c, n as isize, 1);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn precision_parses() {
        assert_eq!("f64".parse::<Precision>().unwrap(), Precision::F64);
        assert!("f16".parse::<Precision>().is_err());
    }
}
