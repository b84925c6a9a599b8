//! Reference and no-reference quality metrics. All arithmetic is in f64
//! whatever the grid precision.

use crate::data::wald::{blur_decimate, wald_sigma};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::RealGrid;
use crate::tensor::sample::resize_bilinear;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// Window of the universal quality index used by the QNR family.
pub const UQI_WINDOW: usize = 32;
/// Block size of the hypercomplex index.
pub const Q2N_BLOCK: usize = 32;

/// A single-channel plane in f64, row-major.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

pub(crate) fn planes<T: Scalar>(x: &RealGrid<T>) -> Vec<Plane> {
    let (h, w, c) = x.dims();
    (0..c)
        .map(|ch| Plane {
            h,
            w,
            v: x.data().iter().skip(ch).step_by(c).map(|v| v.as_f64()).collect(),
        })
        .collect()
}

fn same_dims<T: Scalar>(a: &RealGrid<T>, b: &RealGrid<T>, what: &str) -> Result<()> {
    a.ensure_same_dims(b, what)
}

pub fn psnr<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>, peak: f64) -> Result<f64> {
    same_dims(h, g, "psnr")?;
    let n = h.len() as f64;
    let mse = h
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over the valid region only.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut mid = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            mid[i * ow + j] = k.iter().zip(&p[i * w + j..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for (t, &kt) in k.iter().enumerate() {
            let src = &mid[(i + t) * ow..(i + t + 1) * ow];
            for (o, &s) in out[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                *o += kt * s;
            }
        }
    }
    out
}

/// Mean SSIM (dynamic range 1) over the valid region, averaged over
/// channels.
pub fn ssim<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>) -> Result<f64> {
    same_dims(h, g, "ssim")?;
    let (hh, ww, _) = h.dims();
    if hh < SSIM_WINDOW || ww < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {hh}x{ww}"
        )));
    }
    let k = gaussian_window();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let (ph, pg) = (planes(h), planes(g));
    let mut total = 0.0;
    for (a, b) in ph.iter().zip(&pg) {
        let sq = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            a.v.iter().zip(&b.v).map(|(&x, &y)| f(x, y)).collect()
        };
        let mx = filter_valid(&a.v, hh, ww, &k);
        let my = filter_valid(&b.v, hh, ww, &k);
        let mxx = filter_valid(&sq(&|x, _| x * x), hh, ww, &k);
        let myy = filter_valid(&sq(&|_, y| y * y), hh, ww, &k);
        let mxy = filter_valid(&sq(&|x, y| x * y), hh, ww, &k);
        let n = mx.len() as f64;
        let mut s = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            s += (2.0 * ux * uy + c1) * (2.0 * cxy + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += s / n;
    }
    Ok(total / ph.len() as f64)
}

/// Mean spectral angle in radians. Pixels where either spectrum is the zero
/// vector are skipped; an image with no valid pixel scores 0.
pub fn sam<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>) -> Result<f64> {
    same_dims(h, g, "sam")?;
    let c = h.channels();
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in h.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
        let na = a.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        // 2 atan2(|u - v|, |u + v|) on unit vectors: exact at zero angle,
        // unlike acos of the cosine
        let (mut d2, mut s2) = (0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (u, v) = (x.as_f64() / na, y.as_f64() / nb);
            d2 += (u - v) * (u - v);
            s2 += (u + v) * (u + v);
        }
        total += 2.0 * d2.sqrt().atan2(s2.sqrt());
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// ERGAS of `h` against the reference `g`, normalizing each band RMSE by
/// the reference band mean.
pub fn ergas<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>, ratio: f64) -> Result<f64> {
    same_dims(h, g, "ergas")?;
    if !(ratio > 0.0) {
        return Err(Error::config(format!("ergas ratio must be positive, got {ratio}")));
    }
    let mut acc = 0.0;
    let (ph, pg) = (planes(h), planes(g));
    for (b, (a, r)) in ph.iter().zip(&pg).enumerate() {
        let n = a.v.len() as f64;
        let mu = r.v.iter().sum::<f64>() / n;
        if mu == 0.0 {
            return Err(Error::config(format!("ergas: reference band {b} has zero mean")));
        }
        let mse = a.v.iter().zip(&r.v).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
        acc += mse / (mu * mu);
    }
    Ok(100.0 / ratio * (acc / ph.len() as f64).sqrt())
}

/// Universal quality index from window moments. Degenerate windows fall
/// back to the factors that are defined: constant windows compare means
/// only, zero-mean windows compare structure only, and two all-zero windows
/// are identical.
fn uqi_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let means = mx * mx + my * my;
    let vars = vx + vy;
    match (means == 0.0, vars == 0.0) {
        (true, true) => 1.0,
        (false, true) => 2.0 * mx * my / means,
        (true, false) => 2.0 * cxy / vars,
        (false, false) => 4.0 * cxy * mx * my / (vars * means),
    }
}

/// Summed-area table with a zero border row and column.
fn integral(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for i in 0..h {
        let mut row = 0.0;
        for j in 0..w {
            row += v[i * w + j];
            s[(i + 1) * (w + 1) + j + 1] = s[i * (w + 1) + j + 1] + row;
        }
    }
    s
}

/// Mean universal quality index over all `window x window` positions (step
/// one). A plane smaller than the window in some axis uses its full extent
/// in that axis.
pub(crate) fn uqi_plane(a: &Plane, b: &Plane, window: usize) -> f64 {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let (h, w) = (a.h, a.w);
    let (wh, ww) = (window.min(h), window.min(w));
    let xy: Vec<f64> = a.v.iter().zip(&b.v).map(|(x, y)| x * y).collect();
    let xx: Vec<f64> = a.v.iter().map(|x| x * x).collect();
    let yy: Vec<f64> = b.v.iter().map(|y| y * y).collect();
    let tables = [
        integral(&a.v, h, w),
        integral(&b.v, h, w),
        integral(&xx, h, w),
        integral(&yy, h, w),
        integral(&xy, h, w),
    ];
    let n = (wh * ww) as f64;
    let stride = w + 1;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=(h - wh) {
        for j in 0..=(w - ww) {
            let m = tables.each_ref().map(|s| {
                (s[(i + wh) * stride + j + ww] - s[i * stride + j + ww] - s[(i + wh) * stride + j]
                    + s[i * stride + j])
                    / n
            });
            let [mx, my, sxx, syy, sxy] = m;
            let vx = (sxx - mx * mx).max(0.0);
            let vy = (syy - my * my).max(0.0);
            total += uqi_from_moments(mx, my, vx, vy, sxy - mx * my);
            count += 1;
        }
    }
    total / count as f64
}

/// Cayley-Dickson product of two hypercomplex numbers with power-of-two
/// length: `(a, b)(c, d) = (ac - d*b, da + bc*)`.
pub(crate) fn hc_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let m = n / 2;
    let (a, b) = x.split_at(m);
    let (c, d) = y.split_at(m);
    let ac = hc_mul(a, c);
    let dcb = hc_mul(&hc_conj(d), b);
    let da = hc_mul(d, a);
    let bcc = hc_mul(b, &hc_conj(c));
    let mut out: Vec<f64> = ac.iter().zip(&dcb).map(|(p, q)| p - q).collect();
    out.extend(da.iter().zip(&bcc).map(|(p, q)| p + q));
    out
}

pub(crate) fn hc_conj(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|v| -v).collect();
    out[0] = x[0];
    out
}

fn hc_norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Hypercomplex quality index of one block of pixel spectra.
fn q2n_block(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let c = a[0].len();
    let n = a.len() as f64;
    let mut ma = vec![0.0; c];
    let mut mb = vec![0.0; c];
    let mut cross = vec![0.0; c];
    let (mut ea, mut eb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for k in 0..c {
            ma[k] += x[k];
            mb[k] += y[k];
        }
        ea += hc_norm2(x);
        eb += hc_norm2(y);
        for (s, p) in cross.iter_mut().zip(hc_mul(x, &hc_conj(y))) {
            *s += p;
        }
    }
    ma.iter_mut().chain(mb.iter_mut()).chain(cross.iter_mut()).for_each(|v| *v /= n);
    let mean_prod = hc_mul(&ma, &hc_conj(&mb));
    let cov: Vec<f64> = cross.iter().zip(&mean_prod).map(|(p, q)| p - q).collect();
    let (na, nb) = (hc_norm2(&ma), hc_norm2(&mb));
    let va = (ea / n - na).max(0.0);
    let vb = (eb / n - nb).max(0.0);
    let means = na + nb;
    let vars = va + vb;
    let (abs_ma, abs_mb, abs_cov) = (na.sqrt(), nb.sqrt(), hc_norm2(&cov).sqrt());
    match (means == 0.0, vars == 0.0) {
        (true, true) => 1.0,
        (false, true) => 2.0 * abs_ma * abs_mb / means,
        (true, false) => 2.0 * abs_cov / vars,
        (false, false) => 4.0 * abs_cov * abs_ma * abs_mb / (vars * means),
    }
}

/// Block-averaged hypercomplex quality index (Q4 for four bands, Q8 for
/// eight). Blocks are non-overlapping; a trailing partial block is dropped,
/// and an image smaller than the block in some axis is one block in that
/// axis.
pub fn q2n<T: Scalar>(h: &RealGrid<T>, g: &RealGrid<T>, block: usize) -> Result<f64> {
    same_dims(h, g, "q2n")?;
    let (hh, ww, c) = h.dims();
    if !matches!(c, 1 | 2 | 4 | 8) {
        return Err(Error::Dimension(format!("q2n needs 1, 2, 4 or 8 bands, got {c}")));
    }
    if block == 0 {
        return Err(Error::config("q2n block size must be positive"));
    }
    let (bh, bw) = (block.min(hh), block.min(ww));
    let px = |x: &RealGrid<T>| -> Vec<f64> { x.data().iter().map(|v| v.as_f64()).collect() };
    let (da, db) = (px(h), px(g));
    let mut total = 0.0;
    let mut count = 0usize;
    for bi in 0..hh / bh {
        for bj in 0..ww / bw {
            let mut a = Vec::with_capacity(bh * bw);
            let mut b = Vec::with_capacity(bh * bw);
            for i in bi * bh..(bi + 1) * bh {
                for j in bj * bw..(bj + 1) * bw {
                    let o = (i * ww + j) * c;
                    a.push(&da[o..o + c]);
                    b.push(&db[o..o + c]);
                }
            }
            total += q2n_block(&a, &b);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Spectral distortion: mean absolute change of the inter-band quality
/// index between the fused image and the LR-MS input.
pub fn d_lambda<T: Scalar>(fused: &RealGrid<T>, lrms: &RealGrid<T>) -> Result<f64> {
    if fused.channels() != lrms.channels() {
        return Err(Error::shape(format!(
            "d_lambda: fused has {} bands, LR-MS has {}",
            fused.channels(),
            lrms.channels()
        )));
    }
    let c = fused.channels();
    if c < 2 {
        return Ok(0.0);
    }
    let (pf, pl) = (planes(fused), planes(lrms));
    let mut total = 0.0;
    for l in 0..c {
        for r in l + 1..c {
            let qf = uqi_plane(&pf[l], &pf[r], UQI_WINDOW);
            let ql = uqi_plane(&pl[l], &pl[r], UQI_WINDOW);
            total += (qf - ql).abs();
        }
    }
    Ok(total / (c * (c - 1) / 2) as f64)
}

/// PAN brought onto the fused grid (when jittered) and its Wald-degraded
/// counterpart on the LR-MS grid.
fn pan_pair<T: Scalar>(
    fused: &RealGrid<T>,
    lrms: &RealGrid<T>,
    pan: &RealGrid<T>,
) -> Result<(RealGrid<T>, RealGrid<T>)> {
    if pan.channels() != 1 {
        return Err(Error::shape("d_s: PAN must have one channel"));
    }
    let (fh, fw, _) = fused.dims();
    let pan_hr = if (pan.height(), pan.width()) == (fh, fw) {
        pan.clone()
    } else {
        resize_bilinear(pan, fh, fw)?
    };
    let ratio = fh as f64 / lrms.height() as f64;
    let pan_lr = blur_decimate(&pan_hr, lrms.height(), lrms.width(), wald_sigma(ratio))?;
    Ok((pan_hr, pan_lr))
}

/// Spatial distortion: mean absolute change of each band's quality index
/// against PAN between full and reduced resolution.
pub fn d_s<T: Scalar>(fused: &RealGrid<T>, lrms: &RealGrid<T>, pan: &RealGrid<T>) -> Result<f64> {
    if fused.channels() != lrms.channels() {
        return Err(Error::shape("d_s: fused and LR-MS band counts differ"));
    }
    let (pan_hr, pan_lr) = pan_pair(fused, lrms, pan)?;
    let (pf, pl) = (planes(fused), planes(lrms));
    let (pp, ppl) = (&planes(&pan_hr)[0], &planes(&pan_lr)[0]);
    let total: f64 = pf
        .iter()
        .zip(&pl)
        .map(|(f, l)| (uqi_plane(f, pp, UQI_WINDOW) - uqi_plane(l, ppl, UQI_WINDOW)).abs())
        .sum();
    Ok(total / pf.len() as f64)
}

pub fn qnr(d_lambda: f64, d_s: f64) -> f64 {
    (1.0 - d_lambda) * (1.0 - d_s)
}

/// Per-sample metrics. Reference metrics are absent when no ground truth
/// exists; `q2n` is also absent for band counts it does not support.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub q2n: Option<f64>,
    /// Radians.
    pub sam: Option<f64>,
    pub ergas: Option<f64>,
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
}

impl MetricReport {
    pub fn sam_deg(&self) -> Option<f64> {
        self.sam.map(f64::to_degrees)
    }

    /// Score `fused` against the sample's inputs and, when present, its
    /// ground truth.
    pub fn compute<T: Scalar>(
        fused: &RealGrid<T>,
        lrms: &RealGrid<T>,
        pan: &RealGrid<T>,
        gt: Option<&RealGrid<T>>,
        scale: f64,
    ) -> Result<Self> {
        let dl = d_lambda(fused, lrms)?;
        let ds = d_s(fused, lrms, pan)?;
        let mut r = MetricReport {
            d_lambda: dl,
            d_s: ds,
            qnr: qnr(dl, ds),
            ..Default::default()
        };
        if let Some(g) = gt {
            r.psnr = Some(psnr(fused, g, 1.0)?);
            r.ssim = Some(ssim(fused, g)?);
            r.sam = Some(sam(fused, g)?);
            r.ergas = Some(ergas(fused, g, scale)?);
            r.q2n = match q2n(fused, g, Q2N_BLOCK) {
                Ok(q) => Some(q),
                Err(Error::Dimension(_)) => None,
                Err(e) => return Err(e),
            };
        }
        Ok(r)
    }

    /// Field-wise mean; an optional field is present in the mean only when
    /// every report has it.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let n = reports.len() as f64;
        let opt = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
            reports
                .iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / n)
        };
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MetricReport {
            psnr: opt(|r| r.psnr),
            ssim: opt(|r| r.ssim),
            q2n: opt(|r| r.q2n),
            sam: opt(|r| r.sam),
            ergas: opt(|r| r.ergas),
            d_lambda: avg(|r| r.d_lambda),
            d_s: avg(|r| r.d_s),
            qnr: avg(|r| r.qnr),
        }
    }
}

pub const CSV_HEADER: &str = "sample_id,scale,psnr,ssim,q2n,sam_deg,ergas,d_lambda,d_s,qnr";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.8}")).unwrap_or_default()
}

pub fn csv_row(id: &str, scale: f64, r: &MetricReport) -> String {
    format!(
        "{id},{scale},{},{},{},{},{},{:.8},{:.8},{:.8}",
        cell(r.psnr),
        cell(r.ssim),
        cell(r.q2n),
        cell(r.sam_deg()),
        cell(r.ergas),
        r.d_lambda,
        r.d_s,
        r.qnr
    )
}

/// Header, one row per sample, then a `mean` row. `comment` lines, if any,
/// go first prefixed with `#`.
pub fn metrics_csv(rows: &[(String, f64, MetricReport)], comment: &[String]) -> String {
    let mut out = String::new();
    for c in comment {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (id, scale, r) in rows {
        out.push_str(&csv_row(id, *scale, r));
        out.push('\n');
    }
    if !rows.is_empty() {
        let reports: Vec<MetricReport> = rows.iter().map(|r| r.2).collect();
        let scale = if rows.iter().all(|r| r.1 == rows[0].1) { rows[0].1 } else { f64::NAN };
        out.push_str(&csv_row("mean", scale, &MetricReport::mean(&reports)));
        out.push('\n');
    }
    out
}
