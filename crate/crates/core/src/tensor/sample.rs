//! Continuous-coordinate sampling on grids.
//!
//! Coordinates are in source pixel units with grid point `i` at coordinate
//! `i` (align-corners convention for point sampling). Resizing maps output
//! pixel centres onto input pixel centres, see [`resize_coordinate`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::RealGrid;

/// Source coordinate of output pixel `i` when resizing an axis of length
/// `n_src` to `n_dst`, matching pixel centres and clamped into the grid.
#[inline]
pub fn resize_coordinate(i: usize, n_src: usize, n_dst: usize) -> f64 {
    let c = (i as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5;
    c.clamp(0.0, (n_src - 1) as f64)
}

/// The cell corners and fractional position of a clamped coordinate.
#[inline]
pub fn bracket(coord: f64, n: usize) -> (usize, usize, f64) {
    let c = coord.clamp(0.0, (n - 1) as f64);
    let i0 = (c.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - i0 as f64)
}

/// A fixed four-tap linear resampling: every output pixel is a weighted sum
/// of four source pixels. Backs bilinear resizing and the lifting gather.
#[derive(Debug, Clone)]
pub struct Gather4<T> {
    pub src_h: usize,
    pub src_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub taps: Vec<[usize; 4]>,
    pub weights: Vec<[T; 4]>,
}

impl<T: Scalar> Gather4<T> {
    /// Bilinear taps for explicit `(row, col)` queries laid out row-major in
    /// an `out_h x out_w` grid.
    pub fn bilinear(
        src_h: usize,
        src_w: usize,
        out_h: usize,
        out_w: usize,
        queries: impl Iterator<Item = (f64, f64)>,
    ) -> Self {
        let mut taps = Vec::with_capacity(out_h * out_w);
        let mut weights = Vec::with_capacity(out_h * out_w);
        for (r, c) in queries {
            let (i0, i1, fy) = bracket(r, src_h);
            let (j0, j1, fx) = bracket(c, src_w);
            taps.push([
                i0 * src_w + j0,
                i0 * src_w + j1,
                i1 * src_w + j0,
                i1 * src_w + j1,
            ]);
            weights.push([
                T::of((1.0 - fy) * (1.0 - fx)),
                T::of((1.0 - fy) * fx),
                T::of(fy * (1.0 - fx)),
                T::of(fy * fx),
            ]);
        }
        debug_assert_eq!(taps.len(), out_h * out_w);
        Self {
            src_h,
            src_w,
            out_h,
            out_w,
            taps,
            weights,
        }
    }

    /// Bilinear resize plan from `src_h x src_w` to `out_h x out_w`.
    pub fn resize(src_h: usize, src_w: usize, out_h: usize, out_w: usize) -> Self {
        let rows: Vec<f64> = (0..out_h).map(|i| resize_coordinate(i, src_h, out_h)).collect();
        let cols: Vec<f64> = (0..out_w).map(|j| resize_coordinate(j, src_w, out_w)).collect();
        let queries = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)));
        Self::bilinear(src_h, src_w, out_h, out_w, queries)
    }

    pub fn apply(&self, x: &RealGrid<T>) -> Result<RealGrid<T>> {
        if x.height() != self.src_h || x.width() != self.src_w {
            return Err(Error::shape(format!(
                "gather plan expects {}x{} source, got {}x{}",
                self.src_h,
                self.src_w,
                x.height(),
                x.width()
            )));
        }
        let c = x.channels();
        let xd = x.data();
        let mut out = RealGrid::zeros(self.out_h, self.out_w, c);
        for (p, (taps, wts)) in out
            .data_mut()
            .chunks_exact_mut(c)
            .zip(self.taps.iter().zip(&self.weights))
        {
            for (&t, &wt) in taps.iter().zip(wts) {
                let src = &xd[t * c..(t + 1) * c];
                for (d, &s) in p.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
        Ok(out)
    }

    /// Transpose of [`Gather4::apply`].
    pub fn adjoint(&self, g: &RealGrid<T>) -> RealGrid<T> {
        let c = g.channels();
        let mut out = RealGrid::zeros(self.src_h, self.src_w, c);
        let od = out.data_mut();
        for (p, (taps, wts)) in g
            .data()
            .chunks_exact(c)
            .zip(self.taps.iter().zip(&self.weights))
        {
            for (&t, &wt) in taps.iter().zip(wts) {
                let dst = &mut od[t * c..(t + 1) * c];
                for (d, &s) in dst.iter_mut().zip(p) {
                    *d += wt * s;
                }
            }
        }
        out
    }
}

/// Bilinear interpolation of `x` at each `(row, col)` query (clamped into
/// range). The result is arranged as an `out_h x out_w` grid.
pub fn bilinear_sample<T: Scalar>(
    x: &RealGrid<T>,
    queries: &[(f64, f64)],
    out_h: usize,
    out_w: usize,
) -> Result<RealGrid<T>> {
    if queries.len() != out_h * out_w {
        return Err(Error::shape(format!(
            "{} queries cannot fill a {out_h}x{out_w} grid",
            queries.len()
        )));
    }
    Gather4::bilinear(x.height(), x.width(), out_h, out_w, queries.iter().copied()).apply(x)
}

pub fn resize_bilinear<T: Scalar>(x: &RealGrid<T>, out_h: usize, out_w: usize) -> Result<RealGrid<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize to an empty grid".into()));
    }
    Gather4::resize(x.height(), x.width(), out_h, out_w).apply(x)
}

fn cubic_weights(t: f64) -> [f64; 4] {
    // Keys kernel, a = -0.5, at distances 1+t, t, 1-t, 2-t
    const A: f64 = -0.5;
    let near = |d: f64| ((A + 2.0) * d - (A + 3.0)) * d * d + 1.0;
    let far = |d: f64| ((A * d - 5.0 * A) * d + 8.0 * A) * d - 4.0 * A;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

/// Bicubic (Keys, a = -0.5) resize with edge-clamped taps and the same
/// pixel-centre mapping as [`resize_bilinear`].
pub fn resize_bicubic<T: Scalar>(x: &RealGrid<T>, out_h: usize, out_w: usize) -> Result<RealGrid<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize to an empty grid".into()));
    }
    let (h, w, c) = x.dims();
    let axis = |n_src: usize, n_dst: usize| -> Vec<([usize; 4], [f64; 4])> {
        (0..n_dst)
            .map(|i| {
                let coord = resize_coordinate(i, n_src, n_dst);
                let base = coord.floor();
                let t = coord - base;
                let mut idx = [0usize; 4];
                for (k, slot) in idx.iter_mut().enumerate() {
                    let s = base as isize + k as isize - 1;
                    *slot = s.clamp(0, n_src as isize - 1) as usize;
                }
                (idx, cubic_weights(t))
            })
            .collect()
    };
    let rows = axis(h, out_h);
    let cols = axis(w, out_w);
    let xd = x.data();
    let mut out = RealGrid::zeros(out_h, out_w, c);
    let mut acc = vec![0.0f64; c];
    for (i, (ri, rw)) in rows.iter().enumerate() {
        for (j, (ci, cw)) in cols.iter().enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (&sr, &wr) in ri.iter().zip(rw) {
                for (&sc, &wc) in ci.iter().zip(cw) {
                    let wt = wr * wc;
                    let src = &xd[(sr * w + sc) * c..(sr * w + sc + 1) * c];
                    for (a, &s) in acc.iter_mut().zip(src) {
                        *a += wt * s.as_f64();
                    }
                }
            }
            for (ch, &a) in acc.iter().enumerate() {
                out.set(i, j, ch, T::of(a));
            }
        }
    }
    Ok(out)
}
