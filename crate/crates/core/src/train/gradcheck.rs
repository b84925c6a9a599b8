//! Finite-difference check of the full operator and its training loss.
//!
//! Two properties of the network make naive checks at the initial point
//! meaningless, so the check runs at a generic point instead:
//!
//! * zero biases feeding ReLUs through all-zero features put
//!   pre-activations exactly on the kink, so biases are drawn at random;
//! * at an integer scale the lifted latent has spectrum bins that are real
//!   by symmetry (aliases of the LR Nyquist bins), whose phase sits on the
//!   branch cut with a rounding-noise imaginary part. Any perturbation
//!   flips it between +π and −π, a true jump in the loss. A non-integer
//!   output/LR ratio breaks the symmetry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, Tape};
use crate::data::dataset::make_sample;
use crate::error::Result;
use crate::metrics::loss::record_loss;
use crate::operator::config::EdnoConfig;
use crate::operator::model::record_forward;
use crate::operator::params::{init_params, layout, BlockKind, ParamStore};
use crate::operator::sample::SamplePair;
use crate::tensor::BlockMap;

pub const MODEL_CHECK_STEP: f64 = 1e-5;
/// Output/LR ratio of the default check: a 5x5 LR-MS onto a 16x16 grid.
pub const MODEL_CHECK_SCALE: f64 = 3.2;
const BIAS_SPREAD: f64 = 0.1;
const BIAS_SALT: u64 = 0xb1a5;

/// Initial parameters with biases drawn uniformly in `±0.1`.
pub fn generic_params(cfg: &EdnoConfig, seed: u64) -> Result<ParamStore<f64>> {
    let mut params = init_params::<f64>(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BIAS_SALT);
    for (key, _, kind) in layout(cfg) {
        if kind == BlockKind::Bias {
            let block = params.get_mut(&key).expect("layout keys are present");
            for v in block.data_mut() {
                *v = rng.gen_range(-BIAS_SPREAD..BIAS_SPREAD);
            }
        }
    }
    Ok(params)
}

/// Check the analytic gradient of the hybrid loss for every parameter block
/// of `cfg` in f64, on a `size x size` synthetic scene at `scale`.
pub fn model_grad_check(
    cfg: &EdnoConfig,
    size: usize,
    scale: f64,
    seed: u64,
    step: f64,
    tolerance: f64,
    max_per_block: usize,
) -> Result<GradCheckReport> {
    let sample: SamplePair<f64> = make_sample(seed, size, cfg.bands, scale)?.cast();
    let gt = sample.gt.clone().expect("synthetic samples carry ground truth");
    let params = generic_params(cfg, seed)?;
    let f = |p: &BlockMap<f64>| {
        let mut tape = Tape::new();
        let out = record_forward(&mut tape, p, cfg, &sample)?;
        let loss = record_loss(&mut tape, out, &gt, cfg.lambda)?;
        Ok((tape, loss))
    };
    grad_check(f, &params, step, tolerance, max_per_block)
}
