//! Neural primitives on channel-last grids.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::{RealGrid, Tensor};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Mirror an out-of-range index back into `0..n` without repeating the edge.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

fn expect_dims<T: Scalar>(t: &Tensor<T>, dims: &[usize], what: &str) -> Result<()> {
    if t.dims() == dims {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: expected {dims:?}, got {:?}",
            t.dims()
        )))
    }
}

/// Per-pixel affine channel map: `y[p] = W x[p] + b`, `W` shaped `[c_out, c_in]`.
pub fn conv1x1<T: Scalar>(
    x: &RealGrid<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<RealGrid<T>> {
    let (h, w, cin) = x.dims();
    let cout = *weight.dims().first().unwrap_or(&0);
    expect_dims(weight, &[cout, cin], "conv1x1 weight")?;
    expect_dims(bias, &[cout], "conv1x1 bias")?;
    let p = h * w;
    let mut out = Vec::with_capacity(p * cout);
    for _ in 0..p {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        p,
        cin,
        cout,
        T::one(),
        x.data(),
        cin as isize,
        1,
        weight.data(),
        1,
        cin as isize,
        T::one(),
        &mut out,
        cout as isize,
        1,
    );
    RealGrid::from_vec(h, w, cout, out)
}

/// Unfold 3x3 reflect-padded neighbourhoods: row `p` holds
/// `x[reflect(h+dy-1), reflect(w+dx-1), ci]` at column `ci*9 + dy*3 + dx`.
pub fn im2col3x3<T: Scalar>(x: &RealGrid<T>) -> Result<Vec<T>> {
    let (h, w, c) = x.dims();
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!(
            "3x3 reflect convolution needs at least 2x2 input, got {h}x{w}"
        )));
    }
    let k = 9 * c;
    let mut col = vec![T::zero(); h * w * k];
    let xd = x.data();
    for i in 0..h {
        for j in 0..w {
            let row = &mut col[(i * w + j) * k..(i * w + j + 1) * k];
            for dy in 0..3 {
                let si = reflect(i as isize + dy as isize - 1, h);
                for dx in 0..3 {
                    let sj = reflect(j as isize + dx as isize - 1, w);
                    let src = &xd[(si * w + sj) * c..(si * w + sj + 1) * c];
                    let tap = dy * 3 + dx;
                    for (ci, &v) in src.iter().enumerate() {
                        row[ci * 9 + tap] = v;
                    }
                }
            }
        }
    }
    Ok(col)
}

/// Adjoint of [`im2col3x3`]: scatter-add columns back onto the grid.
pub fn col2im3x3<T: Scalar>(col: &[T], h: usize, w: usize, c: usize) -> RealGrid<T> {
    let k = 9 * c;
    let mut out = RealGrid::zeros(h, w, c);
    let od = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            let row = &col[(i * w + j) * k..(i * w + j + 1) * k];
            for dy in 0..3 {
                let si = reflect(i as isize + dy as isize - 1, h);
                for dx in 0..3 {
                    let sj = reflect(j as isize + dx as isize - 1, w);
                    let dst = &mut od[(si * w + sj) * c..(si * w + sj + 1) * c];
                    let tap = dy * 3 + dx;
                    for (ci, d) in dst.iter_mut().enumerate() {
                        *d += row[ci * 9 + tap];
                    }
                }
            }
        }
    }
    out
}

/// Dense 3x3 convolution (cross-correlation) with reflect padding.
/// `weight` is `[c_out, c_in, 3, 3]`, `bias` is `[c_out]`.
pub fn conv3x3<T: Scalar>(
    x: &RealGrid<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<RealGrid<T>> {
    let col = im2col3x3(x)?;
    conv3x3_from_col(&col, x.height(), x.width(), x.channels(), weight, bias)
}

pub(crate) fn conv3x3_from_col<T: Scalar>(
    col: &[T],
    h: usize,
    w: usize,
    cin: usize,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<RealGrid<T>> {
    let cout = *weight.dims().first().unwrap_or(&0);
    expect_dims(weight, &[cout, cin, 3, 3], "conv3x3 weight")?;
    expect_dims(bias, &[cout], "conv3x3 bias")?;
    let p = h * w;
    let k = 9 * cin;
    let mut out = Vec::with_capacity(p * cout);
    for _ in 0..p {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        p,
        k,
        cout,
        T::one(),
        col,
        k as isize,
        1,
        weight.data(),
        1,
        k as isize,
        T::one(),
        &mut out,
        cout as isize,
        1,
    );
    RealGrid::from_vec(h, w, cout, out)
}

/// Per-channel 3x3 convolution with reflect padding; `kernels` is `[c, 3, 3]`.
pub fn depthwise_conv3x3<T: Scalar>(x: &RealGrid<T>, kernels: &Tensor<T>) -> Result<RealGrid<T>> {
    let (h, w, c) = x.dims();
    expect_dims(kernels, &[c, 3, 3], "depthwise kernels")?;
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!(
            "depthwise 3x3 needs at least 2x2 input, got {h}x{w}"
        )));
    }
    // taps[t * c + ch] for contiguous inner loops over channels
    let kd = kernels.data();
    let mut taps = vec![T::zero(); 9 * c];
    for ch in 0..c {
        for t in 0..9 {
            taps[t * c + ch] = kd[ch * 9 + t];
        }
    }
    let xd = x.data();
    let mut out = RealGrid::zeros(h, w, c);
    let od = out.data_mut();
    for i in 0..h {
        for dy in 0..3 {
            let si = reflect(i as isize + dy as isize - 1, h);
            for j in 0..w {
                let dst = &mut od[(i * w + j) * c..(i * w + j + 1) * c];
                for dx in 0..3 {
                    let sj = reflect(j as isize + dx as isize - 1, w);
                    let src = &xd[(si * w + sj) * c..(si * w + sj + 1) * c];
                    let tap = &taps[(dy * 3 + dx) * c..(dy * 3 + dx + 1) * c];
                    for ((d, &s), &k) in dst.iter_mut().zip(src).zip(tap) {
                        *d += s * k;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Instance normalization without affine terms. Also returns the
/// per-channel `1 / sqrt(var + eps)`.
pub fn instance_norm_with_stats<T: Scalar>(x: &RealGrid<T>, eps: f64) -> (RealGrid<T>, Vec<T>) {
    let (h, w, c) = x.dims();
    let n = (h * w) as f64;
    let mut mean = vec![0.0f64; c];
    for px in x.data().chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(px) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; c];
    for px in x.data().chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    let inv_std: Vec<T> = var.iter().map(|s| T::of(1.0 / (s / n + eps).sqrt())).collect();
    let mean_t: Vec<T> = mean.into_iter().map(T::of).collect();
    let mut out = x.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for ((v, &m), &is) in px.iter_mut().zip(&mean_t).zip(&inv_std) {
            *v = (*v - m) * is;
        }
    }
    (out, inv_std)
}

pub fn instance_norm<T: Scalar>(x: &RealGrid<T>, eps: f64) -> RealGrid<T> {
    instance_norm_with_stats(x, eps).0
}

pub fn relu<T: Scalar>(x: &RealGrid<T>) -> RealGrid<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &RealGrid<T>) -> RealGrid<T> {
    x.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(2, 5), 2);
        assert_eq!(reflect(-1, 2), 1);
        assert_eq!(reflect(2, 2), 0);
    }

    #[test]
    fn relu_and_sigmoid_scalars() {
        let g = RealGrid::<f64>::from_vec(1, 2, 1, vec![-3.0, 2.0]).unwrap();
        assert_eq!(relu(&g).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert_eq!(sigmoid_scalar(1000.0f32), 1.0);
        assert_eq!(sigmoid_scalar(-1000.0f32), 0.0);
        assert!(sigmoid_scalar(-80.0f32).is_finite());
    }

    #[test]
    fn conv1x1_shape_errors() {
        let x = RealGrid::<f32>::zeros(2, 2, 3);
        let w = Tensor::zeros(&[4, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(conv1x1(&x, &w, &b).is_err());
    }

    #[test]
    fn depthwise_rejects_single_row() {
        let x = RealGrid::<f32>::zeros(1, 4, 1);
        let k = Tensor::zeros(&[1, 3, 3]);
        assert!(matches!(depthwise_conv3x3(&x, &k), Err(Error::Dimension(_))));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let x = RealGrid::<f64>::from_fn(3, 4, 2, |h, w, c| ((h * 7 + w * 3 + c * 5) % 11) as f64);
        let col = im2col3x3(&x).unwrap();
        let g: Vec<f64> = (0..col.len()).map(|i| ((i * 13) % 17) as f64 - 8.0).collect();
        let lhs: f64 = col.iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = col2im3x3(&g, 3, 4, 2);
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
