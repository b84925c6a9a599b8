//! Two-dimensional discrete Fourier transforms over channel-last grids.
//!
//! Power-of-two axis lengths use an iterative radix-2 Cooley-Tukey
//! kernel. Any other length goes through Bluestein's chirp-z
//! reformulation, which reuses the radix-2 kernel on a padded
//! power-of-two convolution.
//!
//! Conventions: the forward transform is unnormalized,
//! `X[u,v] = sum x[h,w] exp(-2 pi i (u h / H + v w / W))`, and the inverse
//! carries the `1 / (H W)` factor.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::{ComplexGrid, RealGrid};

/// Returns `(cos, sin)` of `-2 pi k / n`, exact on quarter turns.
fn unit_root(k: u64, n: u64) -> (f64, f64) {
    let k = k % n;
    if k == 0 {
        return (1.0, 0.0);
    }
    if 4 * k == n {
        return (0.0, -1.0);
    }
    if 2 * k == n {
        return (-1.0, 0.0);
    }
    if 4 * k == 3 * n {
        return (0.0, 1.0);
    }
    let a = -2.0 * PI * k as f64 / n as f64;
    (a.cos(), a.sin())
}

struct Radix2<T> {
    n: usize,
    tw_re: Vec<T>,
    tw_im: Vec<T>,
    rev: Vec<usize>,
}

/// One butterfly across `lanes` interleaved sequences: element `a` and
/// element `b` each occupy `lanes` consecutive slots.
#[inline(always)]
fn butterfly<T: Scalar>(re: &mut [T], im: &mut [T], a: usize, b: usize, lanes: usize, wr: T, wi: T) {
    let (re_lo, re_hi) = re.split_at_mut(b);
    let (im_lo, im_hi) = im.split_at_mut(b);
    let ra = &mut re_lo[a..a + lanes];
    let ia = &mut im_lo[a..a + lanes];
    let rb = &mut re_hi[..lanes];
    let ib = &mut im_hi[..lanes];
    for (((ra, ia), rb), ib) in ra.iter_mut().zip(ia.iter_mut()).zip(rb.iter_mut()).zip(ib.iter_mut()) {
        let xr = *rb * wr - *ib * wi;
        let xi = *rb * wi + *ib * wr;
        *rb = *ra - xr;
        *ib = *ia - xi;
        *ra += xr;
        *ia += xi;
    }
}

impl<T: Scalar> Radix2<T> {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half);
        let mut tw_im = Vec::with_capacity(half);
        for k in 0..half {
            let (c, s) = unit_root(k as u64, n as u64);
            tw_re.push(T::of(c));
            tw_im.push(T::of(s));
        }
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Self {
            n,
            tw_re,
            tw_im,
            rev,
        }
    }

    /// In-place forward transform of `lanes` interleaved sequences whose
    /// element `k` starts at `base + k * stride`.
    fn forward(&self, re: &mut [T], im: &mut [T], base: usize, stride: usize, lanes: usize) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i];
            if j > i {
                let (a, b) = (base + i * stride, base + j * stride);
                for l in 0..lanes {
                    re.swap(a + l, b + l);
                    im.swap(a + l, b + l);
                }
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let a = base + (start + j) * stride;
                    let b = a + half * stride;
                    butterfly(re, im, a, b, lanes, self.tw_re[j * step], self.tw_im[j * step]);
                }
            }
            len <<= 1;
        }
    }
}

struct Bluestein<T> {
    n: usize,
    chirp_re: Vec<T>,
    chirp_im: Vec<T>,
    kernel_re: Vec<T>,
    kernel_im: Vec<T>,
    inner: Radix2<T>,
}

impl<T: Scalar> Bluestein<T> {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let two_n = 2 * n as u64;
        let mut chirp_re = Vec::with_capacity(n);
        let mut chirp_im = Vec::with_capacity(n);
        for k in 0..n as u64 {
            // exp(-i pi k^2 / n) == unit_root(k^2 mod 2n, 2n)
            let (c, s) = unit_root((k * k) % two_n, two_n);
            chirp_re.push(c);
            chirp_im.push(s);
        }
        let mut kernel_re = vec![T::zero(); m];
        let mut kernel_im = vec![T::zero(); m];
        kernel_re[0] = T::of(chirp_re[0]);
        kernel_im[0] = T::of(-chirp_im[0]);
        for k in 1..n {
            kernel_re[k] = T::of(chirp_re[k]);
            kernel_im[k] = T::of(-chirp_im[k]);
            kernel_re[m - k] = T::of(chirp_re[k]);
            kernel_im[m - k] = T::of(-chirp_im[k]);
        }
        inner.forward(&mut kernel_re, &mut kernel_im, 0, 1, 1);
        Self {
            n,
            chirp_re: chirp_re.into_iter().map(T::of).collect(),
            chirp_im: chirp_im.into_iter().map(T::of).collect(),
            kernel_re,
            kernel_im,
            inner,
        }
    }

    fn forward(
        &self,
        re: &mut [T],
        im: &mut [T],
        base: usize,
        stride: usize,
        lanes: usize,
        scratch: &mut Vec<T>,
    ) {
        let (n, m) = (self.n, self.inner.n);
        scratch.clear();
        scratch.resize(2 * m * lanes, T::zero());
        let (ar, ai) = scratch.split_at_mut(m * lanes);
        for k in 0..n {
            let (cr, ci) = (self.chirp_re[k], self.chirp_im[k]);
            let src = base + k * stride;
            for l in 0..lanes {
                let (xr, xi) = (re[src + l], im[src + l]);
                ar[k * lanes + l] = xr * cr - xi * ci;
                ai[k * lanes + l] = xr * ci + xi * cr;
            }
        }
        self.inner.forward(ar, ai, 0, lanes, lanes);
        for k in 0..m {
            let (kr, ki) = (self.kernel_re[k], self.kernel_im[k]);
            for l in 0..lanes {
                let (xr, xi) = (ar[k * lanes + l], ai[k * lanes + l]);
                // multiply, then conjugate so the next forward pass acts as an inverse
                ar[k * lanes + l] = xr * kr - xi * ki;
                ai[k * lanes + l] = -(xr * ki + xi * kr);
            }
        }
        self.inner.forward(ar, ai, 0, lanes, lanes);
        let inv_m = T::one() / T::of(m as f64);
        for k in 0..n {
            let (wr, wi) = (self.chirp_re[k], self.chirp_im[k]);
            let dst = base + k * stride;
            for l in 0..lanes {
                let cr = ar[k * lanes + l] * inv_m;
                let ci = -ai[k * lanes + l] * inv_m;
                re[dst + l] = cr * wr - ci * wi;
                im[dst + l] = cr * wi + ci * wr;
            }
        }
    }
}

enum Plan<T> {
    Radix2(Radix2<T>),
    Bluestein(Bluestein<T>),
}

impl<T: Scalar> Plan<T> {
    fn new(n: usize) -> Self {
        if n.is_power_of_two() {
            Plan::Radix2(Radix2::new(n))
        } else {
            Plan::Bluestein(Bluestein::new(n))
        }
    }

    fn forward(
        &self,
        re: &mut [T],
        im: &mut [T],
        base: usize,
        stride: usize,
        lanes: usize,
        scratch: &mut Vec<T>,
    ) {
        match self {
            Plan::Radix2(p) => p.forward(re, im, base, stride, lanes),
            Plan::Bluestein(p) => p.forward(re, im, base, stride, lanes, scratch),
        }
    }
}

/// Unnormalized 2-D transform of every channel, in channel-last layout.
/// Channels are carried as interleaved lanes through every butterfly.
///
/// `inverse` flips the exponent sign; no scaling is applied here.
fn transform_planes<T: Scalar>(
    height: usize,
    width: usize,
    channels: usize,
    re_in: &[T],
    im_in: Option<&[T]>,
    inverse: bool,
) -> Result<(Vec<T>, Vec<T>)> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Dimension(format!(
            "fft needs positive dimensions, got {height}x{width}x{channels}"
        )));
    }
    let row_plan = Plan::<T>::new(width);
    let col_plan = if height == width {
        None
    } else {
        Some(Plan::<T>::new(height))
    };
    let col_plan = col_plan.as_ref().unwrap_or(&row_plan);

    // inverse(x) = conj(forward(conj(x)))
    let sign = if inverse { -T::one() } else { T::one() };
    let mut re = re_in.to_vec();
    let mut im = match im_in {
        Some(im) => im.iter().map(|&v| sign * v).collect(),
        None => vec![T::zero(); re.len()],
    };
    let mut scratch = Vec::new();
    let c = channels;
    for row in 0..height {
        row_plan.forward(&mut re, &mut im, row * width * c, c, c, &mut scratch);
    }
    for col in 0..width {
        col_plan.forward(&mut re, &mut im, col * c, width * c, c, &mut scratch);
    }
    if inverse {
        im.iter_mut().for_each(|v| *v = -*v);
    }
    Ok((re, im))
}

/// Forward 2-D DFT of every channel of a real grid (unnormalized).
pub fn fft2<T: Scalar>(x: &RealGrid<T>) -> Result<ComplexGrid<T>> {
    let (h, w, c) = x.dims();
    let (re, mut im) = transform_planes(h, w, c, x.data(), None, false)?;
    // Self-conjugate bins (DC, and Nyquist on even sides) of a real signal
    // are real. Clearing their rounding noise keeps the phase of a negative
    // bin at exactly -π instead of either side of the branch cut.
    let rows: &[usize] = if h % 2 == 0 && h > 1 { &[0, h / 2] } else { &[0] };
    let cols: &[usize] = if w % 2 == 0 && w > 1 { &[0, w / 2] } else { &[0] };
    for &u in rows {
        for &v in cols {
            let k = (u * w + v) * c;
            im[k..k + c].iter_mut().for_each(|x| *x = T::zero());
        }
    }
    Ok(ComplexGrid {
        height: h,
        width: w,
        channels: c,
        re,
        im,
    })
}

/// Forward 2-D DFT of a complex grid (unnormalized).
pub fn fft2_complex<T: Scalar>(x: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
    let (h, w, c) = x.dims();
    let (re, im) = transform_planes(h, w, c, &x.re, Some(&x.im), false)?;
    Ok(ComplexGrid {
        height: h,
        width: w,
        channels: c,
        re,
        im,
    })
}

/// Normalized inverse 2-D DFT, keeping both real and imaginary parts.
pub fn ifft2_complex<T: Scalar>(x: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
    let (h, w, c) = x.dims();
    let (mut re, mut im) = transform_planes(h, w, c, &x.re, Some(&x.im), true)?;
    let scale = T::one() / T::of((h * w) as f64);
    re.iter_mut().for_each(|v| *v *= scale);
    im.iter_mut().for_each(|v| *v *= scale);
    Ok(ComplexGrid {
        height: h,
        width: w,
        channels: c,
        re,
        im,
    })
}

/// Normalized inverse 2-D DFT; returns the real part and the largest
/// discarded imaginary magnitude.
pub fn ifft2_with_residue<T: Scalar>(x: &ComplexGrid<T>) -> Result<(RealGrid<T>, T)> {
    let full = ifft2_complex(x)?;
    let residue = full.im.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let grid = RealGrid::from_vec(full.height, full.width, full.channels, full.re)?;
    Ok((grid, residue))
}

/// Normalized inverse 2-D DFT, real part only.
pub fn ifft2<T: Scalar>(x: &ComplexGrid<T>) -> Result<RealGrid<T>> {
    Ok(ifft2_with_residue(x)?.0)
}

/// Real part of the unnormalized inverse transform; the adjoint of [`fft2`]
/// restricted to real inputs.
pub(crate) fn fft2_adjoint<T: Scalar>(g: &ComplexGrid<T>) -> Result<RealGrid<T>> {
    let (h, w, c) = g.dims();
    let (re, _) = transform_planes(h, w, c, &g.re, Some(&g.im), true)?;
    RealGrid::from_vec(h, w, c, re)
}
