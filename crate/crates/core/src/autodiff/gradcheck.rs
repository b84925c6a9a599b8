//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::tensor::blocks::BlockMap;

use super::tape::{Tape, Var};

/// Relative to the largest gradient, below this a block counts as
/// identically zero.
pub const ZERO_BLOCK: f64 = 1e-9;

/// Outcome for one parameter block.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub key: String,
    /// `max |analytic - fd| / max |analytic|` over the checked coordinates.
    /// For an identically zero block the denominator is the largest
    /// gradient of any block.
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss is not smooth there at the
    /// chosen step (FD at `h` and `h/2` disagree).
    pub kinks: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }

    pub fn kink_fraction(&self) -> f64 {
        let total: usize = self.blocks.iter().map(|b| b.checked + b.kinks).sum();
        let kinks: usize = self.blocks.iter().map(|b| b.kinks).sum();
        if total == 0 {
            0.0
        } else {
            kinks as f64 / total as f64
        }
    }

    /// Every block within tolerance and at most 10% of coordinates skipped.
    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance && self.kink_fraction() <= 0.1
    }
}

/// Compare analytic gradients of `f` against fourth-order central
/// differences.
///
/// `f` records a scalar loss for the given parameters. At most
/// `max_per_block` coordinates are probed per block (evenly strided, always
/// including the first and last); pass `usize::MAX` to probe all of them.
pub fn grad_check<F>(
    f: F,
    params: &BlockMap<f64>,
    step: f64,
    tolerance: f64,
    max_per_block: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&BlockMap<f64>) -> Result<(Tape<f64>, Var)>,
{
    let (tape, loss) = f(params)?;
    let analytic = super::backward(&tape, loss, params)?;
    let eval = |p: &BlockMap<f64>| -> Result<f64> {
        let (t, l) = f(p)?;
        t.scalar(l)
    };

    // Blocks whose gradient vanishes identically (a bias feeding a
    // normalization, say) have no scale of their own; measure them against
    // the largest gradient in the model instead.
    let global = analytic
        .iter()
        .flat_map(|(_, g)| g.data().iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut blocks = Vec::new();
    let mut probe = params.clone();
    for (key, block) in params.iter() {
        let grad = analytic.require(key)?;
        let n = block.len();
        let indices: Vec<usize> = if n <= max_per_block {
            (0..n).collect()
        } else {
            let m = max_per_block.max(2);
            (0..m).map(|i| i * (n - 1) / (m - 1)).collect()
        };
        let scale = grad.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_err = 0.0f64;
        let mut checked = 0;
        let mut kinks = 0;
        for &i in &indices {
            let orig = block.data()[i];
            // Fourth-order central stencil: the loss has strong curvature
            // near small spectral magnitudes, where the second-order error
            // alone reaches 1e-5 at usable steps.
            let mut central = |h: f64| -> Result<f64> {
                let mut at = |d: f64| -> Result<f64> {
                    probe.get_mut(key).expect("same layout").data_mut()[i] = orig + d;
                    eval(&probe)
                };
                let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
                probe.get_mut(key).expect("same layout").data_mut()[i] = orig;
                Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
            };
            let fd = central(step)?;
            let err = (grad.data()[i] - fd).abs();
            let denom = if scale > ZERO_BLOCK * global {
                scale
            } else if global > 0.0 {
                global
            } else {
                1.0
            };
            if err / denom >= tolerance {
                let fd_half = central(step / 2.0)?;
                if (fd - fd_half).abs() / denom >= tolerance {
                    kinks += 1;
                    continue;
                }
            }
            max_err = max_err.max(err / denom);
            checked += 1;
        }
        blocks.push(BlockCheck {
            key: key.to_string(),
            rel_error: max_err,
            checked,
            kinks,
        });
    }
    Ok(GradCheckReport { blocks, tolerance })
}
