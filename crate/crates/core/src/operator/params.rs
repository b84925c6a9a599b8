//! Parameter layout, initialization and the closed-form size.
//!
//! Block shapes for latent width C, bands B and T iterations:
//!
//! | key                      | shape         | present                       |
//! |--------------------------|---------------|-------------------------------|
//! | `pan_enc.conv{1,2}.{w,b}`| C×1×3×3, C×C×3×3 (+C bias) | always           |
//! | `ms_enc.conv{1,2}.{w,b}` | C×B×3×3, C×C×3×3 (+C bias) | always           |
//! | `lift.{w,b}`             | C×(C+8), C    | always                        |
//! | `iter{t}.skip.{w,b}`     | C×C, C        | t < T−1                       |
//! | `iter{t}.efim.{w,b}`     | C×2C, C       | phase fusion on               |
//! | `iter{t}.ifim.mix.{w,b}` | C×2C, C       | magnitude fusion on           |
//! | `iter{t}.ifim.dw`        | C×3×3         | magnitude fusion + depthwise  |
//! | `iter{t}.ifim.proj.{w,b}`| C×C, C        | magnitude fusion on           |
//! | `iter{t}.spectral.{wr,wi}`| C×2C, C×2C   | vanilla FNO only              |
//! | `proj.{w,b}`             | B×C, B        | always                        |
//!
//! For the full model this totals
//! `19C² + (9B + 22)C + (T−1)(C² + C) + T(5C² + 12C) + BC + B`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::blocks::BlockMap;
use crate::tensor::grid::Tensor;

use super::config::{Ablation, EdnoConfig};

/// Learnable blocks keyed by stable names.
pub type ParamStore<T> = BlockMap<T>;

/// Number of fractional-offset scalars appended during lifting.
pub const OFFSET_CHANNELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Weight { fan_in: usize },
    Bias,
}

type Entry = (String, Vec<usize>, BlockKind);

fn push_conv(out: &mut Vec<Entry>, key: &str, cout: usize, cin: usize, k: usize, bias: bool) {
    let shape = if k == 1 {
        vec![cout, cin]
    } else {
        vec![cout, cin, k, k]
    };
    let fan_in = cin * k * k;
    out.push((format!("{key}.w"), shape, BlockKind::Weight { fan_in }));
    if bias {
        out.push((format!("{key}.b"), vec![cout], BlockKind::Bias));
    }
}

/// Ordered list of `(key, shape, kind)` for a configuration.
pub fn layout(cfg: &EdnoConfig) -> Vec<Entry> {
    let c = cfg.channels;
    let b = cfg.bands;
    let a = cfg.ablation;
    let mut out = Vec::new();
    push_conv(&mut out, "pan_enc.conv1", c, 1, 3, true);
    push_conv(&mut out, "pan_enc.conv2", c, c, 3, true);
    push_conv(&mut out, "ms_enc.conv1", c, b, 3, true);
    push_conv(&mut out, "ms_enc.conv2", c, c, 3, true);
    push_conv(&mut out, "lift", c, c + OFFSET_CHANNELS, 1, true);
    for t in 0..cfg.iterations {
        if t + 1 < cfg.iterations {
            push_conv(&mut out, &format!("iter{t}.skip"), c, c, 1, true);
        }
        if a == Ablation::VanillaFno {
            for part in ["wr", "wi"] {
                out.push((
                    format!("iter{t}.spectral.{part}"),
                    vec![c, 2 * c],
                    BlockKind::Weight { fan_in: 2 * c },
                ));
            }
            continue;
        }
        if a.uses_phase_fusion() {
            push_conv(&mut out, &format!("iter{t}.efim"), c, 2 * c, 1, true);
        }
        if a.uses_magnitude_fusion() {
            push_conv(&mut out, &format!("iter{t}.ifim.mix"), c, 2 * c, 1, true);
            if a.uses_depthwise() {
                out.push((
                    format!("iter{t}.ifim.dw"),
                    vec![c, 3, 3],
                    BlockKind::Weight { fan_in: 9 },
                ));
            }
            push_conv(&mut out, &format!("iter{t}.ifim.proj"), c, c, 1, true);
        }
    }
    push_conv(&mut out, "proj", b, c, 1, true);
    out
}

/// Exact parameter count, from the closed form for each variant.
pub fn param_count(cfg: &EdnoConfig) -> usize {
    let (c, b, t) = (cfg.channels, cfg.bands, cfg.iterations);
    let encoders = (9 * c + c) + (9 * c * c + c) + (9 * b * c + c) + (9 * c * c + c);
    let lift = c * (c + OFFSET_CHANNELS) + c;
    let skips = (t - 1) * (c * c + c);
    let efim = 2 * c * c + c;
    let ifim_core = (2 * c * c + c) + (c * c + c);
    let per_iter = match cfg.ablation {
        Ablation::Full => efim + ifim_core + 9 * c,
        Ablation::VanillaFno => 2 * (2 * c * c),
        Ablation::PhaseOnly => efim,
        Ablation::MagnitudeOnly => ifim_core + 9 * c,
        Ablation::NoDepthwise => efim + ifim_core,
    };
    let proj = b * c + b;
    encoders + lift + skips + t * per_iter + proj
}

/// Uniform `±1/√fan_in` weights and zero biases, drawn in key order from a
/// seeded stream. Values are drawn in f64 and rounded, so f32 and f64
/// stores with the same seed agree up to rounding.
pub fn init_params<T: Scalar>(cfg: &EdnoConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = BlockMap::new();
    for (key, shape, kind) in layout(cfg) {
        let n: usize = shape.iter().product();
        let data = match kind {
            BlockKind::Weight { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
            }
            BlockKind::Bias => vec![T::zero(); n],
        };
        store.insert(key, Tensor::from_vec(&shape, data)?)?;
    }
    Ok(store)
}

/// Every block zero; the network then reduces to its global residual.
pub fn zero_params<T: Scalar>(cfg: &EdnoConfig) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = BlockMap::new();
    for (key, shape, _) in layout(cfg) {
        store.insert(key, Tensor::zeros(&shape))?;
    }
    Ok(store)
}
