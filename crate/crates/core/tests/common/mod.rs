//! Naive reference implementations shared by the integration tests. Each is
//! written directly from its textbook definition, without the library's
//! factorizations (no FFT, no separable filters, no summed-area tables).
#![allow(dead_code)]

pub mod ops;

use std::f64::consts::PI;

use edno_core::data::band_mean;
use edno_core::tensor::RealGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(seed: u64, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> RealGrid<f64> {
    let mut r = rng(seed);
    RealGrid::from_fn(h, w, c, |_, _, _| r.gen_range(lo..hi))
}

/// Channel `c` as a row-major `h x w` matrix.
pub fn plane(x: &RealGrid<f64>, c: usize) -> Vec<Vec<f64>> {
    (0..x.height())
        .map(|i| (0..x.width()).map(|j| x.at(i, j, c)).collect())
        .collect()
}

/// `X[u][v] = sum_{h,w} x[h][w] exp(-2 pi i (u h / H + v w / W))`.
pub fn dft2(re: &[Vec<f64>], im: &[Vec<f64>], inverse: bool) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (h, w) = (re.len(), re[0].len());
    let sign = if inverse { 1.0 } else { -1.0 };
    let norm = if inverse { 1.0 / (h * w) as f64 } else { 1.0 };
    let mut or = vec![vec![0.0; w]; h];
    let mut oi = vec![vec![0.0; w]; h];
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let t = sign * 2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let (s, c) = t.sin_cos();
                    sr += re[y][x] * c - im[y][x] * s;
                    si += re[y][x] * s + im[y][x] * c;
                }
            }
            or[u][v] = sr * norm;
            oi[u][v] = si * norm;
        }
    }
    (or, oi)
}

pub fn reflect(i: isize, n: usize) -> usize {
    // -1 -> 1, n -> n - 2
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n as isize {
            i = 2 * (n as isize - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 3x3 cross-correlation with reflect padding;
/// `w[o][i][dy][dx]`, `b[o]`.
pub fn conv3x3(x: &RealGrid<f64>, w: &[f64], b: &[f64]) -> RealGrid<f64> {
    let (h, wd, cin) = x.dims();
    let cout = b.len();
    RealGrid::from_fn(h, wd, cout, |i, j, o| {
        let mut s = b[o];
        for ci in 0..cin {
            for dy in 0..3 {
                for dx in 0..3 {
                    let yi = reflect(i as isize + dy as isize - 1, h);
                    let xj = reflect(j as isize + dx as isize - 1, wd);
                    s += w[((o * cin + ci) * 3 + dy) * 3 + dx] * x.at(yi, xj, ci);
                }
            }
        }
        s
    })
}

pub fn depthwise3x3(x: &RealGrid<f64>, k: &[f64]) -> RealGrid<f64> {
    let (h, wd, c) = x.dims();
    RealGrid::from_fn(h, wd, c, |i, j, ch| {
        let mut s = 0.0;
        for dy in 0..3 {
            for dx in 0..3 {
                let yi = reflect(i as isize + dy as isize - 1, h);
                let xj = reflect(j as isize + dx as isize - 1, wd);
                s += k[(ch * 3 + dy) * 3 + dx] * x.at(yi, xj, ch);
            }
        }
        s
    })
}

/// `w` is `[c_out][c_in]`.
pub fn conv1x1(x: &RealGrid<f64>, w: &[f64], b: &[f64]) -> RealGrid<f64> {
    let cin = x.channels();
    RealGrid::from_fn(x.height(), x.width(), b.len(), |i, j, o| {
        b[o] + (0..cin).map(|ci| w[o * cin + ci] * x.at(i, j, ci)).sum::<f64>()
    })
}

/// Two-pass per-channel standardization.
pub fn instance_norm(x: &RealGrid<f64>, eps: f64) -> RealGrid<f64> {
    let (h, w, c) = x.dims();
    let n = (h * w) as f64;
    let stats: Vec<(f64, f64)> = (0..c)
        .map(|ch| {
            let vals: Vec<f64> = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).map(|(i, j)| x.at(i, j, ch)).collect();
            let mu = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            (mu, var)
        })
        .collect();
    RealGrid::from_fn(h, w, c, |i, j, ch| (x.at(i, j, ch) - stats[ch].0) / (stats[ch].1 + eps).sqrt())
}

// ---------------------------------------------------------------- metrics

pub fn psnr(a: &RealGrid<f64>, b: &RealGrid<f64>) -> f64 {
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}

/// Gaussian-window SSIM at every valid 11x11 position, two-pass moments.
pub fn ssim(a: &RealGrid<f64>, b: &RealGrid<f64>) -> f64 {
    let (h, w, c) = a.dims();
    let mut k = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (dy, row) in k.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            let (y, x) = (dy as f64 - 5.0, dx as f64 - 5.0);
            *v = (-(x * x + y * y) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for ch in 0..c {
        let mut s = 0.0;
        let mut count = 0.0;
        for i in 0..=h - 11 {
            for j in 0..=w - 11 {
                let mut mx = 0.0;
                let mut my = 0.0;
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wt = k[dy][dx] / total;
                        mx += wt * a.at(i + dy, j + dx, ch);
                        my += wt * b.at(i + dy, j + dx, ch);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wt = k[dy][dx] / total;
                        let (p, q) = (a.at(i + dy, j + dx, ch) - mx, b.at(i + dy, j + dx, ch) - my);
                        vx += wt * p * p;
                        vy += wt * q * q;
                        cxy += wt * p * q;
                    }
                }
                s += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        acc += s / count;
    }
    acc / c as f64
}

/// Mean spectral angle (radians) via the arccosine of the cosine.
pub fn sam(a: &RealGrid<f64>, b: &RealGrid<f64>) -> f64 {
    let c = a.channels();
    let mut total = 0.0;
    let mut n = 0.0;
    for (x, y) in a.data().chunks(c).zip(b.data().chunks(c)) {
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        let ny = y.iter().map(|q| q * q).sum::<f64>().sqrt();
        if nx > 0.0 && ny > 0.0 {
            total += (dot / (nx * ny)).clamp(-1.0, 1.0).acos();
            n += 1.0;
        }
    }
    total / n
}

pub fn ergas(a: &RealGrid<f64>, reference: &RealGrid<f64>, ratio: f64) -> f64 {
    let c = a.channels();
    let mut acc = 0.0;
    for ch in 0..c {
        let (pa, pr) = (plane(a, ch), plane(reference, ch));
        let n = (a.height() * a.width()) as f64;
        let mu: f64 = pr.iter().flatten().sum::<f64>() / n;
        let mse: f64 = pa.iter().flatten().zip(pr.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
        acc += mse / (mu * mu);
    }
    100.0 / ratio * (acc / c as f64).sqrt()
}

fn uqi_window(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
    4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my))
}

/// Sliding-window (step one) universal quality index of two planes.
pub fn uqi(x: &[Vec<f64>], y: &[Vec<f64>], window: usize) -> f64 {
    let (h, w) = (x.len(), x[0].len());
    let (wh, ww) = (window.min(h), window.min(w));
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..=h - wh {
        for j in 0..=w - ww {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for r in i..i + wh {
                a.extend_from_slice(&x[r][j..j + ww]);
                b.extend_from_slice(&y[r][j..j + ww]);
            }
            total += uqi_window(&a, &b);
            count += 1.0;
        }
    }
    total / count
}

/// Hamilton product on (1, i, j, k) components.
pub fn quat_mul(p: [f64; 4], q: [f64; 4]) -> [f64; 4] {
    let [a1, b1, c1, d1] = p;
    let [a2, b2, c2, d2] = q;
    [
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ]
}

pub fn quat_conj(p: [f64; 4]) -> [f64; 4] {
    [p[0], -p[1], -p[2], -p[3]]
}

fn quat_norm(p: [f64; 4]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Q4 over non-overlapping `block x block` tiles; four-band images only.
pub fn q4(fused: &RealGrid<f64>, reference: &RealGrid<f64>, block: usize) -> f64 {
    let (h, w, c) = fused.dims();
    assert_eq!(c, 4);
    let px = |g: &RealGrid<f64>, i: usize, j: usize| [g.at(i, j, 0), g.at(i, j, 1), g.at(i, j, 2), g.at(i, j, 3)];
    let (bh, bw) = (block.min(h), block.min(w));
    let mut total = 0.0;
    let mut count = 0.0;
    for bi in 0..h / bh {
        for bj in 0..w / bw {
            let cells: Vec<(usize, usize)> = (bi * bh..(bi + 1) * bh)
                .flat_map(|i| (bj * bw..(bj + 1) * bw).map(move |j| (i, j)))
                .collect();
            let n = cells.len() as f64;
            let mut mz = [0.0; 4];
            let mut mw = [0.0; 4];
            for &(i, j) in &cells {
                for k in 0..4 {
                    mz[k] += px(fused, i, j)[k] / n;
                    mw[k] += px(reference, i, j)[k] / n;
                }
            }
            let (mut vz, mut vw) = (0.0, 0.0);
            let mut cov = [0.0; 4];
            for &(i, j) in &cells {
                let mut dz = px(fused, i, j);
                let mut dw = px(reference, i, j);
                for k in 0..4 {
                    dz[k] -= mz[k];
                    dw[k] -= mw[k];
                }
                vz += quat_norm(dz).powi(2) / n;
                vw += quat_norm(dw).powi(2) / n;
                let p = quat_mul(dz, quat_conj(dw));
                for k in 0..4 {
                    cov[k] += p[k] / n;
                }
            }
            let (nz, nw) = (quat_norm(mz), quat_norm(mw));
            total += 4.0 * quat_norm(cov) * nz * nw / ((vz + vw) * (nz * nz + nw * nw));
            count += 1.0;
        }
    }
    total / count
}

/// Gaussian blur (sigma = ratio / 2, 4-sigma box, mirrored edges) sampled at
/// the LR pixel centres, with the 2-D kernel normalized as a whole.
pub fn wald_reduce(x: &RealGrid<f64>, out_h: usize, out_w: usize) -> RealGrid<f64> {
    let (h, w, c) = x.dims();
    let ratio = h as f64 / out_h as f64;
    let sigma = ratio / 2.0;
    let reach = 4.0 * sigma;
    RealGrid::from_fn(out_h, out_w, c, |k, l, ch| {
        let cy = (k as f64 + 0.5) * h as f64 / out_h as f64 - 0.5;
        let cx = (l as f64 + 0.5) * w as f64 / out_w as f64 - 0.5;
        let (mut s, mut norm) = (0.0, 0.0);
        let mut y = (cy - reach).ceil() as isize;
        while y as f64 <= cy + reach {
            let mut xx = (cx - reach).ceil() as isize;
            while xx as f64 <= cx + reach {
                let d2 = (y as f64 - cy).powi(2) + (xx as f64 - cx).powi(2);
                let wt = (-d2 / (2.0 * sigma * sigma)).exp();
                s += wt * x.at(reflect(y, h), reflect(xx, w), ch);
                norm += wt;
                xx += 1;
            }
            y += 1;
        }
        s / norm
    })
}

pub fn d_lambda(fused: &RealGrid<f64>, lrms: &RealGrid<f64>) -> f64 {
    let c = fused.channels();
    let mut total = 0.0;
    let mut pairs = 0.0;
    for l in 0..c {
        for r in l + 1..c {
            let qf = uqi(&plane(fused, l), &plane(fused, r), 32);
            let ql = uqi(&plane(lrms, l), &plane(lrms, r), 32);
            total += (qf - ql).abs();
            pairs += 1.0;
        }
    }
    total / pairs
}

/// PAN on the fused grid, reduced to the LR grid with [`wald_reduce`].
pub fn d_s(fused: &RealGrid<f64>, lrms: &RealGrid<f64>, pan: &RealGrid<f64>) -> f64 {
    let pan_lr = wald_reduce(pan, lrms.height(), lrms.width());
    let (p, pl) = (plane(pan, 0), plane(&pan_lr, 0));
    let c = fused.channels();
    (0..c)
        .map(|b| (uqi(&plane(fused, b), &p, 32) - uqi(&plane(lrms, b), &pl, 32)).abs())
        .sum::<f64>()
        / c as f64
}

pub fn source_coord(i: usize, n: usize, m: usize) -> f64 {
    ((i as f64 + 0.5) * n as f64 / m as f64 - 0.5).clamp(0.0, (n - 1) as f64)
}

/// The four neighbours of an output pixel and their bilinear weights, in
/// (top-left, top-right, bottom-left, bottom-right) order.
pub fn neighbours(i: usize, j: usize, src: (usize, usize), dst: (usize, usize)) -> [((usize, usize), f64, (f64, f64)); 4] {
    let (r, c) = (source_coord(i, src.0, dst.0), source_coord(j, src.1, dst.1));
    let (i0, j0) = (r.floor() as usize, c.floor() as usize);
    let (i1, j1) = ((i0 + 1).min(src.0 - 1), (j0 + 1).min(src.1 - 1));
    let (fy, fx) = (r - i0 as f64, c - j0 as f64);
    let at = |a: usize, b: usize, wt: f64| ((a, b), wt, (r - a as f64, c - b as f64));
    [
        at(i0, j0, (1.0 - fy) * (1.0 - fx)),
        at(i0, j1, (1.0 - fy) * fx),
        at(i1, j0, fy * (1.0 - fx)),
        at(i1, j1, fy * fx),
    ]
}

pub fn bilinear(x: &RealGrid<f64>, h: usize, w: usize) -> RealGrid<f64> {
    RealGrid::from_fn(h, w, x.channels(), |i, j, c| {
        neighbours(i, j, (x.height(), x.width()), (h, w))
            .iter()
            .map(|&((a, b), wt, _)| wt * x.at(a, b, c))
            .sum()
    })
}

pub struct MetricCase {
    pub fused: RealGrid<f64>,
    pub gt: RealGrid<f64>,
    pub lrms: RealGrid<f64>,
    pub pan: RealGrid<f64>,
}

/// A smooth random scene, a noisy "fusion" of it, and its Wald inputs.
pub fn metric_case(seed: u64) -> MetricCase {
    let mut r = rng(seed);
    let (h, bands) = (64, 4);
    let freqs: Vec<(f64, f64, f64)> = (0..bands * 3)
        .map(|_| (r.gen_range(0.5..4.0), r.gen_range(0.5..4.0), r.gen_range(0.0..6.28)))
        .collect();
    let gt = RealGrid::from_fn(h, h, bands, |i, j, c| {
        let (y, x) = (i as f64 / h as f64, j as f64 / h as f64);
        let s: f64 = freqs[c * 3..c * 3 + 3]
            .iter()
            .map(|(fy, fx, p)| (6.28 * (fy * y + fx * x) + p).sin())
            .sum();
        0.5 + 0.13 * s
    });
    let jitter = random_grid(seed ^ 0xabc, h, h, bands, -0.05, 0.05);
    let fused = gt.zip_map(&jitter, |a, b| a + b).unwrap();
    let lrms = wald_reduce(&gt, 16, 16);
    let pan_noise = random_grid(seed ^ 0xdef, h, h, 1, -0.02, 0.02);
    let pan = band_mean(&gt).zip_map(&pan_noise, |a, b| a + b).unwrap();
    MetricCase { fused, gt, lrms, pan }
}
