//! Evaluation-side drivers: reference/no-reference evaluation, single-pair
//! fusion, zero-shot scale sweep, PAN jitter robustness and ablations.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::dataset::{load_split, make_sample, read_manifest, Split};
use crate::data::tensorfile::{read_tensor_file, write_atomic, write_tensor_file, Record, TensorFile};
use crate::data::wald::jitter_scale;
use crate::error::{Error, Result};
use crate::metrics::quality::{csv_row, metrics_csv, MetricReport, CSV_HEADER};
use crate::operator::config::{Ablation, EdnoConfig};
use crate::operator::model::predict;
use crate::operator::params::{param_count, ParamStore};
use crate::operator::sample::SamplePair;
use crate::scalar::{Precision, Scalar};
use crate::tensor::grid::RealGrid;
use crate::tensor::sample::resize_bicubic;
use crate::train::checkpoint::load_checkpoint;
use crate::train::config::RunConfig;
use crate::train::parallel::par_map;
use crate::train::trainer::{train, TrainSummary, BEST_CHECKPOINT, SELECTION_RULE};

/// One scored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub scale: f64,
    pub report: MetricReport,
}

/// Where the model's inputs and which parameters come from.
#[derive(Debug, Clone)]
pub struct EvalSource {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub split: Split,
    pub precision: Precision,
    pub threads: usize,
}

fn rows_csv(rows: &[EvalRow], comment: &[String]) -> String {
    let tuples: Vec<(String, f64, MetricReport)> =
        rows.iter().map(|r| (r.id.clone(), r.scale, r.report)).collect();
    metrics_csv(&tuples, comment)
}

/// Header comment lines shared by every result file.
fn provenance(run: &RunConfig, checkpoint: &Path, extra: &[String]) -> Vec<String> {
    let mut lines = vec![format!("checkpoint={}", checkpoint.display()), SELECTION_RULE.to_string()];
    lines.extend(run.header_lines());
    lines.extend(extra.iter().cloned());
    lines
}

/// Score the clamped model output for every sample. Reference metrics are
/// computed only when `with_gt` is set and the sample has ground truth.
pub fn score_samples<T: Scalar>(
    params: &ParamStore<T>,
    cfg: &EdnoConfig,
    samples: &[(String, SamplePair<T>)],
    with_gt: bool,
    threads: usize,
) -> Result<Vec<EvalRow>> {
    par_map(samples, threads, |(id, s)| -> Result<EvalRow> {
        let fused = predict(s, params, cfg)?;
        let gt = if with_gt { s.gt.as_ref() } else { None };
        Ok(EvalRow {
            id: id.clone(),
            scale: s.scale,
            report: MetricReport::compute(&fused, &s.lrms, &s.pan, gt, s.scale)?,
        })
    })
    .into_iter()
    .collect()
}

fn check_bands<T: Scalar>(cfg: &EdnoConfig, samples: &[(String, SamplePair<T>)]) -> Result<()> {
    match samples.first() {
        Some((_, s)) if s.bands() != cfg.bands => Err(Error::config(format!(
            "checkpoint expects {} bands, dataset has {}",
            cfg.bands,
            s.bands()
        ))),
        Some(_) => Ok(()),
        None => Err(Error::Dataset("no samples to evaluate".into())),
    }
}

fn evaluate_typed<T: Scalar>(src: &EvalSource, out_csv: &Path, withhold_gt: bool) -> Result<Vec<EvalRow>> {
    let (run, params) = load_checkpoint::<T>(&src.checkpoint)?;
    let samples = load_split::<T>(&src.dataset, src.split)?;
    check_bands(&run.model, &samples)?;
    let rows = score_samples(&params, &run.model, &samples, !withhold_gt, src.threads)?;
    let extra = [format!("split={}", src.split), format!("ground_truth={}", !withhold_gt)];
    let text = rows_csv(&rows, &provenance(&run, &src.checkpoint, &extra));
    write_atomic(out_csv, text.as_bytes())?;
    Ok(rows)
}

/// Evaluate a checkpoint on a dataset split and write the metrics CSV.
/// With `withhold_gt` only the no-reference columns are filled.
pub fn evaluate(src: &EvalSource, out_csv: &Path, withhold_gt: bool) -> Result<Vec<EvalRow>> {
    match src.precision {
        Precision::F32 => evaluate_typed::<f32>(src, out_csv, withhold_gt),
        Precision::F64 => evaluate_typed::<f64>(src, out_csv, withhold_gt),
    }
}

fn fuse_typed<T: Scalar>(checkpoint: &Path, input: &Path, output: &Path, scale: Option<f64>) -> Result<RealGrid<T>> {
    let (run, params) = load_checkpoint::<T>(checkpoint)?;
    let file = read_tensor_file(input)?;
    let read = |name: &str| -> Result<RealGrid<T>> {
        match file.get(name)?.data {
            crate::data::RecordData::F64(_) => Ok(file.grid::<f64>(name)?.cast()),
            _ => Ok(file.grid::<f32>(name)?.cast()),
        }
    };
    let pan = read("pan")?;
    let lrms = read("lrms")?;
    let scale = scale.unwrap_or(pan.height() as f64 / lrms.height() as f64);
    let mut sample = SamplePair {
        pan,
        lrms,
        gt: None,
        scale,
        pan_jitter: 0.0,
    };
    let (th, tw) = sample.target_dims();
    if (sample.pan.height(), sample.pan.width()) != (th, tw) {
        // PAN off the output grid: treat the size difference as jitter
        sample.pan_jitter = sample.pan.height() as f64 / th as f64 - 1.0;
    }
    sample.validate()?;
    let fused = predict(&sample, &params, &run.model)?;
    write_tensor_file(output, &TensorFile::new(vec![Record::grid("fused", &fused)]))?;
    Ok(fused)
}

/// Fuse one `pan`/`lrms` pair read from a TensorFile into a `fused`
/// record. The output grid is `scale` times the LR-MS size; by default the
/// PAN/LR-MS height ratio.
pub fn fuse(checkpoint: &Path, input: &Path, output: &Path, scale: Option<f64>, precision: Precision) -> Result<()> {
    match precision {
        Precision::F32 => fuse_typed::<f32>(checkpoint, input, output, scale).map(|_| ()),
        Precision::F64 => fuse_typed::<f64>(checkpoint, input, output, scale).map(|_| ()),
    }
}

/// Mean metrics of the model and of the bicubic baseline at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: &'static str,
    pub scale: f64,
    pub mean: MetricReport,
}

fn scale_tag(scale: f64) -> String {
    format!("x{scale}")
}

fn sweep_typed<T: Scalar>(src: &EvalSource, scales: &[f64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    let (run, params) = load_checkpoint::<T>(&src.checkpoint)?;
    let entries: Vec<_> = read_manifest(&src.dataset)?
        .into_iter()
        .filter(|e| e.split == src.split)
        .collect();
    let first = load_split::<T>(&src.dataset, src.split)?;
    check_bands(&run.model, &first)?;
    let (lr_h, lr_w, bands) = first[0].1.lrms.dims();
    if lr_h != lr_w {
        return Err(Error::Dataset("scale sweep needs square scenes".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();
    for &r in scales {
        let hr = (lr_h as f64 * r).round() as usize;
        let samples: Vec<(String, SamplePair<T>)> = entries
            .iter()
            .map(|e| -> Result<(String, SamplePair<T>)> {
                Ok((e.id.clone(), make_sample(e.seed, hr, bands, r)?.cast()))
            })
            .collect::<Result<_>>()?;
        let model = score_samples(&params, &run.model, &samples, true, src.threads)?;
        let baseline: Vec<EvalRow> = par_map(&samples, src.threads, |(id, s)| -> Result<EvalRow> {
            let (th, tw) = s.target_dims();
            let up = resize_bicubic(&s.lrms, th, tw)?.clamp(T::zero(), T::one());
            Ok(EvalRow {
                id: id.clone(),
                scale: s.scale,
                report: MetricReport::compute(&up, &s.lrms, &s.pan, s.gt.as_ref(), s.scale)?,
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let extra = [format!("split={}", src.split), format!("scale={r}"), "ground_truth=true".into()];
        let comment = provenance(&run, &src.checkpoint, &extra);
        write_atomic(
            &out_dir.join(format!("scale_{}.csv", scale_tag(r))),
            rows_csv(&model, &comment).as_bytes(),
        )?;
        write_atomic(
            &out_dir.join(format!("bicubic_{}.csv", scale_tag(r))),
            rows_csv(&baseline, &comment).as_bytes(),
        )?;
        let mean = |rows: &[EvalRow]| MetricReport::mean(&rows.iter().map(|r| r.report).collect::<Vec<_>>());
        out.push(SweepRow { method: "edno", scale: r, mean: mean(&model) });
        out.push(SweepRow { method: "bicubic", scale: r, mean: mean(&baseline) });
    }
    let mut text = String::new();
    for line in provenance(&run, &src.checkpoint, &[format!("split={}", src.split)]) {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(&format!("method,{CSV_HEADER}\n").replace("sample_id,", ""));
    for row in &out {
        let line = csv_row("", row.scale, &row.mean);
        text.push_str(&format!("{}{}\n", row.method, line));
    }
    write_atomic(&out_dir.join("scale_sweep.csv"), text.as_bytes())?;
    Ok(out)
}

/// Evaluate one parameter set at every scale in `scales` on scenes freshly
/// rendered and degraded at that scale (LR-MS size fixed to the dataset's),
/// together with a bicubic-upsampling baseline. Writes per-scale metric
/// CSVs and a `scale_sweep.csv` summary.
pub fn scale_sweep(src: &EvalSource, scales: &[f64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    if scales.is_empty() || scales.iter().any(|&r| !(r >= 1.0 && r.is_finite())) {
        return Err(Error::config("scales must be finite and >= 1"));
    }
    match src.precision {
        Precision::F32 => sweep_typed::<f32>(src, scales, out_dir),
        Precision::F64 => sweep_typed::<f64>(src, scales, out_dir),
    }
}

/// Paired clean/jittered result for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterRow {
    pub id: String,
    pub clean: MetricReport,
    pub jittered: MetricReport,
    pub error_map: PathBuf,
}

impl JitterRow {
    /// PSNR lost to the jitter (positive means worse).
    pub fn psnr_drop(&self) -> Option<f64> {
        Some(self.clean.psnr? - self.jittered.psnr?)
    }
}

pub const ERROR_MAP_RECORD: &str = "abs_error";

fn jitter_typed<T: Scalar>(src: &EvalSource, jitter: f64, out_dir: &Path) -> Result<Vec<JitterRow>> {
    let (run, params) = load_checkpoint::<T>(&src.checkpoint)?;
    let samples = load_split::<T>(&src.dataset, src.split)?;
    check_bands(&run.model, &samples)?;
    let maps = out_dir.join("error_maps");
    fs::create_dir_all(&maps)?;
    let cfg = &run.model;
    let rows: Vec<JitterRow> = par_map(&samples, src.threads, |(id, s)| -> Result<JitterRow> {
        let gt = s.gt.as_ref().ok_or_else(|| Error::Dataset(format!("{id} has no ground truth")))?;
        let clean = predict(s, &params, cfg)?;
        let js = jitter_scale(s, jitter)?;
        let fused = predict(&js, &params, cfg)?;
        let err = fused.zip_map(gt, |a, b| (a - b).abs())?;
        let err_clean = clean.zip_map(gt, |a, b| (a - b).abs())?;
        let path = maps.join(format!("{id}.edt"));
        let file = TensorFile::new(vec![
            Record::grid(ERROR_MAP_RECORD, &err),
            Record::grid("abs_error_clean", &err_clean),
        ]);
        write_tensor_file(&path, &file)?;
        Ok(JitterRow {
            id: id.clone(),
            clean: MetricReport::compute(&clean, &s.lrms, &s.pan, Some(gt), s.scale)?,
            jittered: MetricReport::compute(&fused, &js.lrms, &js.pan, Some(gt), js.scale)?,
            error_map: path,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let extra = [format!("split={}", src.split), format!("pan_jitter={jitter}")];
    let comment = provenance(&run, &src.checkpoint, &extra);
    let scale = samples[0].1.scale;
    let as_rows = |f: fn(&JitterRow) -> MetricReport| -> Vec<EvalRow> {
        rows.iter()
            .map(|r| EvalRow { id: r.id.clone(), scale, report: f(r) })
            .collect()
    };
    write_atomic(&out_dir.join("metrics_jitter.csv"), rows_csv(&as_rows(|r| r.jittered), &comment).as_bytes())?;
    write_atomic(&out_dir.join("metrics_clean.csv"), rows_csv(&as_rows(|r| r.clean), &comment).as_bytes())?;
    let mut text: String = comment.iter().map(|c| format!("# {c}\n")).collect();
    text.push_str("sample_id,psnr_clean,psnr_jitter,psnr_drop\n");
    let mut sums = (0.0, 0.0);
    for r in &rows {
        let (c, j) = (r.clean.psnr.unwrap_or(f64::NAN), r.jittered.psnr.unwrap_or(f64::NAN));
        sums.0 += c;
        sums.1 += j;
        text.push_str(&format!("{},{c:.8},{j:.8},{:.8}\n", r.id, c - j));
    }
    let n = rows.len() as f64;
    text.push_str(&format!(
        "mean,{:.8},{:.8},{:.8}\n",
        sums.0 / n,
        sums.1 / n,
        (sums.0 - sums.1) / n
    ));
    write_atomic(&out_dir.join("jitter_drop.csv"), text.as_bytes())?;
    Ok(rows)
}

/// Evaluate with the PAN resampled by `1 + jitter`, paired with the clean
/// evaluation. Writes metric CSVs for both, a per-sample PSNR drop table and
/// one absolute-error TensorFile per sample.
pub fn jitter_test(src: &EvalSource, jitter: f64, out_dir: &Path) -> Result<Vec<JitterRow>> {
    match src.precision {
        Precision::F32 => jitter_typed::<f32>(src, jitter, out_dir),
        Precision::F64 => jitter_typed::<f64>(src, jitter, out_dir),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// Iteration count T in {2, 3, 4, 5}.
    TSweep,
    /// The four architectural ablations plus the full model.
    Configs,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_sweep" => Ok(AblationMode::TSweep),
            "configs" => Ok(AblationMode::Configs),
            other => Err(Error::config(format!("unknown ablation mode `{other}`"))),
        }
    }
}

pub const T_SWEEP: [usize; 4] = [2, 3, 4, 5];

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub name: String,
    pub label: String,
    pub model: EdnoConfig,
    pub params: usize,
    pub summary: TrainSummary,
    pub test: MetricReport,
    pub checkpoint: PathBuf,
}

/// The run configurations an ablation mode trains, named.
pub fn variants(base: &RunConfig, mode: AblationMode) -> Vec<(String, String, RunConfig)> {
    let mut out = Vec::new();
    match mode {
        AblationMode::TSweep => {
            for t in T_SWEEP {
                let mut r = base.clone();
                r.model.iterations = t;
                out.push((format!("T{t}"), format!("T={t}"), r));
            }
        }
        AblationMode::Configs => {
            for a in Ablation::ALL {
                let mut r = base.clone();
                r.model.ablation = a;
                out.push((a.name().to_string(), a.label().to_string(), r));
            }
        }
    }
    for (name, _, r) in &mut out {
        r.out = base.out.join(&*name);
    }
    out
}

pub const ABLATION_HEADER: &str =
    "variant,label,iterations,params,epochs,steps,best_val_psnr,psnr,ssim,q2n,sam_deg,ergas,d_lambda,d_s,qnr";

/// Train every variant of `mode` with the shared seed and data, evaluate
/// each best checkpoint on `test_split`, and write `ablation_{mode}.csv`
/// under `base.out`. Variants whose `best.edt` already exists with a
/// matching configuration are reused when `resume` is set.
pub fn ablate(base: &RunConfig, mode: AblationMode, test_split: Split, resume: bool) -> Result<Vec<VariantResult>> {
    fs::create_dir_all(&base.out)?;
    let mut results = Vec::new();
    for (name, label, run) in variants(base, mode) {
        let summary = match (resume, crate::train::trainer::read_summary(&run)) {
            (true, Some(s)) => s,
            _ => train(&run)?,
        };
        let src = EvalSource {
            checkpoint: run.out.join(BEST_CHECKPOINT),
            dataset: run.dataset.clone(),
            split: test_split,
            precision: run.precision,
            threads: run.threads,
        };
        let rows = evaluate(&src, &run.out.join(format!("metrics_{test_split}.csv")), false)?;
        let test = MetricReport::mean(&rows.iter().map(|r| r.report).collect::<Vec<_>>());
        log::info!("{name}: test psnr {:?}", test.psnr);
        results.push(VariantResult {
            name,
            label,
            params: param_count(&run.model),
            model: run.model.clone(),
            summary,
            test,
            checkpoint: src.checkpoint,
        });
    }
    let mode_name = match mode {
        AblationMode::TSweep => "t_sweep",
        AblationMode::Configs => "configs",
    };
    let mut text: String = base.header_lines().iter().map(|l| format!("# {l}\n")).collect();
    text.push_str(&format!("# {SELECTION_RULE}\n# test_split={test_split}\n"));
    text.push_str(ABLATION_HEADER);
    text.push('\n');
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
    for v in &results {
        let t = &v.test;
        text.push_str(&format!(
            "{},{},{},{},{},{},{:.8},{},{},{},{},{},{:.8},{:.8},{:.8}\n",
            v.name,
            v.label,
            v.model.iterations,
            v.params,
            v.summary.epochs,
            v.summary.steps,
            v.summary.best_val_psnr,
            cell(t.psnr),
            cell(t.ssim),
            cell(t.q2n),
            cell(t.sam_deg()),
            cell(t.ergas),
            t.d_lambda,
            t.d_s,
            t.qnr
        ));
    }
    write_atomic(&base.out.join(format!("ablation_{mode_name}.csv")), text.as_bytes())?;
    Ok(results)
}
