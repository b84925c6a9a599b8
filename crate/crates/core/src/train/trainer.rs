use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, GradStore, Tape};
use crate::data::dataset::load_split;
use crate::data::tensorfile::{write_atomic, write_tensor_file, Record, TensorFile};
use crate::error::{Error, Result};
use crate::metrics::loss::{loss_total, record_loss};
use crate::metrics::quality::psnr;
use crate::operator::config::EdnoConfig;
use crate::operator::model::{forward, record_forward};
use crate::operator::params::{init_params, ParamStore};
use crate::operator::sample::SamplePair;
use crate::scalar::{Precision, Scalar};
use crate::train::adam::{adam_step, OptimState};
use crate::train::alloc::keep_freed_memory;
use crate::train::checkpoint::save_checkpoint;
use crate::train::config::RunConfig;
use crate::train::parallel::par_map;

pub const LOG_FILE: &str = "train_log.csv";
pub const BEST_CHECKPOINT: &str = "best.edt";
pub const LAST_CHECKPOINT: &str = "last.edt";
pub const NAN_DUMP: &str = "nan_dump.edt";
/// Wall-clock report; kept out of the log so logs stay reproducible.
pub const TIMING_FILE: &str = "timing.txt";
pub const SELECTION_RULE: &str = "selection=best validation PSNR (mean over the validation split, output clamped to [0,1])";
const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Epochs,
    MaxSteps,
    TimeLimit,
    TargetReached,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Epochs => "epochs",
            StopReason::MaxSteps => "max_steps",
            StopReason::TimeLimit => "time_limit",
            StopReason::TargetReached => "target_psnr",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: u64,
    pub epochs: usize,
    pub best_val_psnr: f64,
    pub best_epoch: usize,
    pub final_val_psnr: f64,
    pub stop: StopReason,
    pub seconds: f64,
    pub log_path: PathBuf,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradient<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
    sample: &SamplePair<T>,
) -> Result<(f64, GradStore<T>)> {
    let gt = sample
        .gt
        .as_ref()
        .ok_or_else(|| Error::Dataset("training sample has no ground truth".into()))?;
    let mut tape = Tape::new();
    let out = record_forward(&mut tape, params, cfg, sample)?;
    let loss = record_loss(&mut tape, out, gt, cfg.lambda)?;
    let value = tape.scalar(loss)?.as_f64();
    let grads = backward(&tape, loss, params)?;
    Ok((value, grads))
}

/// Mean loss and mean gradient over `batch`. Samples may be processed on
/// several threads; the sum always runs in batch order.
pub fn batch_gradient<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
    batch: &[&SamplePair<T>],
    threads: usize,
) -> Result<(f64, GradStore<T>)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let results = par_map(batch, threads, |s| sample_gradient(params, cfg, s));
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.add_scaled(&g, T::one())?;
    }
    let inv = T::of(1.0 / batch.len() as f64);
    Ok((loss / batch.len() as f64, total.map(|v| v * inv)))
}

/// Mean loss (unclamped output) and mean PSNR (clamped output) over
/// `samples`.
pub fn validate<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
    samples: &[SamplePair<T>],
    threads: usize,
) -> Result<(f64, f64)> {
    let per = par_map(samples, threads, |s| -> Result<(f64, f64)> {
        let gt = s
            .gt
            .as_ref()
            .ok_or_else(|| Error::Dataset("validation sample has no ground truth".into()))?;
        let out = forward(s, params, cfg)?;
        let loss = loss_total(&out, gt, cfg.lambda)?;
        let p = psnr(&out.clamp(T::zero(), T::one()), gt, 1.0)?;
        Ok((loss, p))
    });
    let (mut loss, mut p) = (0.0, 0.0);
    for r in per {
        let (l, q) = r?;
        loss += l;
        p += q;
    }
    let n = samples.len() as f64;
    Ok((loss / n, p / n))
}

fn nan_abort<T: Scalar>(
    run: &RunConfig,
    params: &ParamStore<T>,
    grads: Option<&GradStore<T>>,
    step: u64,
    what: &str,
) -> Error {
    let block = params
        .first_non_finite()
        .or_else(|| grads.and_then(|g| g.first_non_finite()))
        .unwrap_or("<none: all blocks finite>")
        .to_string();
    let mut records = vec![Record::text("__diagnostic__", format!("step={step}\n{what}\nblock={block}\n"))];
    records.extend(params.iter().map(|(k, t)| Record::tensor(k, t)));
    if let Some(g) = grads {
        records.extend(g.iter().map(|(k, t)| Record::tensor(format!("grad.{k}"), t)));
    }
    let dump = run.out.join(NAN_DUMP);
    let note = match write_tensor_file(&dump, &TensorFile::new(records)) {
        Ok(()) => format!("state dumped to {}", dump.display()),
        Err(e) => format!("state dump failed: {e}"),
    };
    Error::NonFinite(format!("{what} at step {step}; first non-finite block `{block}`; {note}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Train from freshly initialized parameters on in-memory samples. Writes
/// the log, best and last checkpoints, and a timing note under `run.out`.
pub fn train_on<T: Scalar>(
    run: &RunConfig,
    train: &[SamplePair<T>],
    val: &[SamplePair<T>],
) -> Result<TrainSummary> {
    let params = init_params::<T>(&run.model, run.seed)?;
    train_from(run, params, train, val)
}

/// As [`train_on`], starting from the given parameters.
pub fn train_from<T: Scalar>(
    run: &RunConfig,
    mut params: ParamStore<T>,
    train: &[SamplePair<T>],
    val: &[SamplePair<T>],
) -> Result<TrainSummary> {
    run.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset("training and validation sets must be non-empty".into()));
    }
    keep_freed_memory();
    fs::create_dir_all(&run.out)?;
    let started = Instant::now();
    let cfg = &run.model;
    let mut state = OptimState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = String::new();
    for line in run.header_lines() {
        log.push_str(&format!("# {line}\n"));
    }
    log.push_str(&format!("# {SELECTION_RULE}\n"));
    log.push_str("epoch,step,train_loss,val_loss,val_psnr\n");

    let best_path = run.out.join(BEST_CHECKPOINT);
    let last_path = run.out.join(LAST_CHECKPOINT);
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut last_psnr = f64::NAN;
    let mut step = 0u64;
    let mut epoch = 0usize;
    let mut stop = StopReason::Epochs;

    'epochs: while epoch < run.epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut halted = None;
        for idx in order.chunks(run.batch_size) {
            let batch: Vec<&SamplePair<T>> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(&params, cfg, &batch, run.threads)?;
            if !loss.is_finite() {
                let e = nan_abort(run, &params, Some(&grads), step + 1, &format!("training loss is {loss}"));
                return Err(e);
            }
            if let Some(block) = grads.first_non_finite() {
                let what = format!("gradient of `{block}` is non-finite");
                return Err(nan_abort(run, &params, Some(&grads), step + 1, &what));
            }
            adam_step(&mut params, &grads, &mut state, &run.adam)?;
            step += 1;
            if params.first_non_finite().is_some() {
                return Err(nan_abort(run, &params, Some(&grads), step, "parameter update produced non-finite values"));
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            if run.max_steps.is_some_and(|m| step >= m) {
                halted = Some(StopReason::MaxSteps);
                break;
            }
            if run.time_limit.is_some_and(|t| started.elapsed().as_secs_f64() >= t) {
                halted = Some(StopReason::TimeLimit);
                break;
            }
        }
        let last_epoch = halted.is_some() || epoch == run.epochs;
        let (mut vloss, mut vpsnr) = (None, None);
        if epoch % run.eval_every == 0 || last_epoch {
            let (l, p) = validate(&params, cfg, val, run.threads)?;
            if !l.is_finite() {
                return Err(nan_abort(run, &params, None, step, &format!("validation loss is {l}")));
            }
            vloss = Some(l);
            vpsnr = Some(p);
            last_psnr = p;
            if p > best.0 {
                best = (p, epoch);
                let meta = [
                    SELECTION_RULE.to_string(),
                    format!("epoch={epoch}"),
                    format!("step={step}"),
                    format!("val_psnr={p}"),
                ];
                save_checkpoint(&best_path, run, &params, &meta)?;
            }
        }
        log.push_str(&format!(
            "{epoch},{step},{},{},{}\n",
            loss_sum / seen as f64,
            fmt_opt(vloss),
            fmt_opt(vpsnr)
        ));
        log::info!(
            "epoch {epoch} step {step} loss {:.6} val_psnr {} ({:.0}s)",
            loss_sum / seen as f64,
            vpsnr.map_or("-".to_string(), |p| format!("{p:.3}")),
            started.elapsed().as_secs_f64()
        );
        if let Some(h) = halted {
            stop = h;
            break 'epochs;
        }
        if let (Some(target), Some(p)) = (run.target_psnr, vpsnr) {
            if p >= target {
                stop = StopReason::TargetReached;
                break 'epochs;
            }
        }
    }

    let meta = [format!("epoch={epoch}"), format!("step={step}"), "selection=last step".to_string()];
    save_checkpoint(&last_path, run, &params, &meta)?;
    let log_path = run.out.join(LOG_FILE);
    write_atomic(&log_path, log.as_bytes())?;
    let seconds = started.elapsed().as_secs_f64();
    let timing = format!(
        "seconds={seconds:.3}\nsteps={step}\nepochs={epoch}\nstop={}\nseconds_per_step={:.4}\n",
        stop.name(),
        seconds / step.max(1) as f64
    );
    write_atomic(&run.out.join(TIMING_FILE), timing.as_bytes())?;
    Ok(TrainSummary {
        steps: step,
        epochs: epoch,
        best_val_psnr: best.0,
        best_epoch: best.1,
        final_val_psnr: last_psnr,
        stop,
        seconds,
        log_path,
        best_path,
        last_path,
    })
}

/// First `limit` samples of a split (all when `None`).
pub fn load_samples<T: Scalar>(run: &RunConfig, split: crate::data::Split) -> Result<Vec<SamplePair<T>>> {
    let mut v: Vec<SamplePair<T>> = load_split::<T>(&run.dataset, split)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    if let Some(n) = run.limit {
        v.truncate(n);
    }
    Ok(v)
}

fn train_typed<T: Scalar>(run: &RunConfig) -> Result<TrainSummary> {
    let train = load_samples::<T>(run, run.train_split)?;
    let val = load_samples::<T>(run, run.val_split)?;
    if let Some(s) = train.first() {
        if s.bands() != run.model.bands {
            return Err(Error::config(format!(
                "dataset has {} bands, model expects {}",
                s.bands(),
                run.model.bands
            )));
        }
    }
    train_on(run, &train, &val)
}

/// Train on the dataset named in `run`, in the run's precision.
pub fn train(run: &RunConfig) -> Result<TrainSummary> {
    match run.precision {
        Precision::F32 => train_typed::<f32>(run),
        Precision::F64 => train_typed::<f64>(run),
    }
}

impl StopReason {
    fn parse(s: &str) -> Option<Self> {
        [
            StopReason::Epochs,
            StopReason::MaxSteps,
            StopReason::TimeLimit,
            StopReason::TargetReached,
        ]
        .into_iter()
        .find(|r| r.name() == s)
    }
}

/// Summary of a finished run found under `run.out`, if its artifacts exist
/// and its checkpoint was written for exactly this configuration.
pub fn read_summary(run: &RunConfig) -> Option<TrainSummary> {
    let best_path = run.out.join(BEST_CHECKPOINT);
    let file = crate::data::tensorfile::read_tensor_file(&best_path).ok()?;
    let stored = RunConfig::from_kv(file.text(crate::train::checkpoint::CONFIG_RECORD).ok()?).ok()?;
    if stored.to_kv() != run.to_kv() {
        return None;
    }
    let timing = fs::read_to_string(run.out.join(TIMING_FILE)).ok()?;
    let kv: Vec<(String, String)> = crate::operator::config::parse_kv(&timing).ok()?;
    let get = |k: &str| kv.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str());
    let log_path = run.out.join(LOG_FILE);
    let log = fs::read_to_string(&log_path).ok()?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut last = f64::NAN;
    for line in log.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if let (Some(e), Some(p)) = (f.first(), f.get(4).filter(|p| !p.is_empty())) {
            let (e, p): (usize, f64) = (e.parse().ok()?, p.parse().ok()?);
            last = p;
            if p > best.0 {
                best = (p, e);
            }
        }
    }
    Some(TrainSummary {
        steps: get("steps")?.parse().ok()?,
        epochs: get("epochs")?.parse().ok()?,
        best_val_psnr: best.0,
        best_epoch: best.1,
        final_val_psnr: last,
        stop: StopReason::parse(get("stop")?)?,
        seconds: get("seconds")?.parse().ok()?,
        log_path,
        best_path,
        last_path: run.out.join(LAST_CHECKPOINT),
    })
}
