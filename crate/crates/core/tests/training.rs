//! Optimizer, training loop, checkpoints and the evaluation drivers on a
//! tiny synthetic dataset.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use edno_core::data::{generate_dataset, jitter_scale, load_split, read_tensor_file, write_tensor_file, DatasetSpec, Record, Split, TensorFile};
use edno_core::metrics::MetricReport;
use edno_core::operator::{init_params, predict, EdnoConfig};
use edno_core::tensor::{BlockMap, Tensor};
use edno_core::train::experiments::ERROR_MAP_RECORD;
use edno_core::train::{
    ablate, adam_step, evaluate, fuse, jitter_test, load_checkpoint, save_checkpoint, scale_sweep, train, train_from,
    AblationMode, AdamConfig, EvalSource, OptimState, RunConfig, StopReason,
};
use edno_core::{Error, Precision};
use proptest::prelude::*;
use tempfile::TempDir;

fn tiny_dataset() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec {
        train: 4,
        val: 2,
        test: 2,
        size: 32,
        bands: 4,
        scale: 4.0,
        seed: 21,
    };
    generate_dataset(dir.path(), &spec).unwrap();
    dir
}

fn tiny_run(data: &Path, out: PathBuf) -> RunConfig {
    RunConfig {
        model: EdnoConfig {
            channels: 4,
            iterations: 2,
            ..EdnoConfig::default()
        },
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        epochs: 3,
        batch_size: 2,
        dataset: data.to_path_buf(),
        out,
        threads: 1,
        ..RunConfig::default()
    }
}

fn source(run: &RunConfig, split: Split) -> EvalSource {
    EvalSource {
        checkpoint: run.out.join("best.edt"),
        dataset: run.dataset.clone(),
        split,
        precision: Precision::F32,
        threads: 1,
    }
}

fn store(values: &[f64]) -> BlockMap<f64> {
    let mut m = BlockMap::new();
    m.insert("x", Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()).unwrap();
    m
}

#[test]
fn adam_descends_a_quadratic_bowl() {
    let target = [0.5, -1.0, 2.0];
    let mut p = store(&[0.0, 0.0, 0.0]);
    let mut state = OptimState::new(&p);
    let hp = AdamConfig { lr: 0.1, ..AdamConfig::default() };
    let loss = |p: &BlockMap<f64>| -> f64 { p.get("x").unwrap().data().iter().zip(target).map(|(x, t)| (x - t).powi(2)).sum() };
    let mut last = loss(&p);
    for _ in 0..10 {
        let g: Vec<f64> = p.get("x").unwrap().data().iter().zip(target).map(|(x, t)| 2.0 * (x - t)).collect();
        adam_step(&mut p, &store(&g), &mut state, &hp).unwrap();
        let now = loss(&p);
        assert!(now < last, "{now} >= {last}");
        last = now;
    }
}

#[test]
fn adam_matches_textbook_updates() {
    let hp = AdamConfig { lr: 0.01, beta1: 0.8, beta2: 0.99, eps: 1e-6 };
    let grads = [[0.3, -2.0], [0.1, 0.5], [-0.4, 1.0]];
    let mut p = store(&[1.0, -1.0]);
    let mut state = OptimState::new(&p);
    let (mut x, mut m, mut v) = ([1.0f64, -1.0], [0.0f64; 2], [0.0f64; 2]);
    for (t, g) in grads.iter().enumerate() {
        adam_step(&mut p, &store(g), &mut state, &hp).unwrap();
        let t = t as i32 + 1;
        for k in 0..2 {
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
            let mh = m[k] / (1.0 - hp.beta1.powi(t));
            let vh = v[k] / (1.0 - hp.beta2.powi(t));
            x[k] -= hp.lr * mh / (vh.sqrt() + hp.eps);
        }
    }
    let got = p.get("x").unwrap().data();
    assert!((got[0] - x[0]).abs() < 1e-15 && (got[1] - x[1]).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_adam_step_ignores_gradient_scale(
        g in prop::collection::vec(-10.0f64..10.0, 1..16),
        c in 1e-2f64..1e3,
    ) {
        let run = |scale: f64| {
            let mut p = store(&vec![0.0; g.len()]);
            let mut st = OptimState::new(&p);
            let scaled: Vec<f64> = g.iter().map(|v| v * scale).collect();
            adam_step(&mut p, &store(&scaled), &mut st, &AdamConfig::default()).unwrap();
            p.get("x").unwrap().data().to_vec()
        };
        let (a, b) = (run(1.0), run(c));
        for (k, gk) in g.iter().enumerate() {
            if gk.abs() > 1e-3 {
                prop_assert!((b[k] / a[k] - 1.0).abs() < 1e-3);
            }
        }
    }
}

#[test]
fn training_is_bit_reproducible_and_thread_independent() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let a = tiny_run(data.path(), out.path().join("a"));
    let mut b = tiny_run(data.path(), out.path().join("b"));
    b.threads = 2;
    let sa = train(&a).unwrap();
    train(&b).unwrap();
    assert_eq!(sa.steps, 6);
    assert_eq!(sa.stop, StopReason::Epochs);
    for f in ["train_log.csv", "best.edt", "last.edt"] {
        assert_eq!(fs::read(a.out.join(f)).unwrap(), fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(&sa.log_path).unwrap();
    let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,step,train_loss,val_loss,val_psnr");
    assert_eq!(rows.len(), 4);
    assert!(rows[1..].iter().all(|r| r.split(',').all(|f| f.parse::<f64>().map_or(false, f64::is_finite))));

    let mut c = tiny_run(data.path(), out.path().join("c"));
    c.seed = 1;
    train(&c).unwrap();
    assert_ne!(fs::read(a.out.join("last.edt")).unwrap(), fs::read(c.out.join("last.edt")).unwrap());
}

#[test]
fn step_and_target_limits_stop_early() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let mut r = tiny_run(data.path(), out.path().join("steps"));
    r.max_steps = Some(3);
    let s = train(&r).unwrap();
    assert_eq!((s.steps, s.epochs, s.stop), (3, 2, StopReason::MaxSteps));
    let mut r = tiny_run(data.path(), out.path().join("target"));
    r.target_psnr = Some(0.0);
    let s = train(&r).unwrap();
    assert_eq!((s.epochs, s.stop), (1, StopReason::TargetReached));
}

#[test]
fn checkpoint_round_trip_reproduces_predictions() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let run = tiny_run(data.path(), out.path().to_path_buf());
    let params = init_params::<f32>(&run.model, 9).unwrap();
    let path = out.path().join("ck.edt");
    save_checkpoint(&path, &run, &params, &["note".into()]).unwrap();
    let (back_run, back) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(back_run.to_kv(), run.to_kv());
    assert_eq!(back, params);
    let s = &load_split::<f32>(data.path(), Split::Test).unwrap()[0].1;
    assert_eq!(predict(s, &back, &run.model).unwrap(), predict(s, &params, &run.model).unwrap());
    let (_, wide) = load_checkpoint::<f64>(&path).unwrap();
    assert_eq!(wide.get("lift.w").unwrap().data()[0], params.get("lift.w").unwrap().data()[0] as f64);
}

#[test]
fn evaluation_drivers_agree_with_each_other() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let run = tiny_run(data.path(), out.path().join("run"));
    train(&run).unwrap();
    let src = source(&run, Split::Test);

    let full = evaluate(&src, &out.path().join("m.csv"), false).unwrap();
    let blind = evaluate(&src, &out.path().join("blind.csv"), true).unwrap();
    assert_eq!(full.len(), 2);
    for (f, b) in full.iter().zip(&blind) {
        assert!(f.report.psnr.is_some() && b.report.psnr.is_none());
        assert!(b.report.ssim.is_none() && b.report.sam.is_none() && b.report.ergas.is_none() && b.report.q2n.is_none());
        assert_eq!((f.report.d_lambda, f.report.d_s, f.report.qnr), (b.report.d_lambda, b.report.d_s, b.report.qnr));
    }
    let csv = fs::read_to_string(out.path().join("m.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("# selection=")));

    let mean = MetricReport::mean(&full.iter().map(|r| r.report).collect::<Vec<_>>());
    let sweep = scale_sweep(&src, &[2.0, 4.0], &out.path().join("sweep")).unwrap();
    assert_eq!(sweep.len(), 4);
    let at4 = sweep.iter().find(|r| r.method == "edno" && r.scale == 4.0).unwrap();
    assert_eq!(at4.mean.psnr, mean.psnr);
    assert!(out.path().join("sweep/scale_sweep.csv").exists());

    let clean = jitter_test(&src, 0.0, &out.path().join("j0")).unwrap();
    for (r, f) in clean.iter().zip(&full) {
        assert_eq!(r.jittered, r.clean);
        assert_eq!(r.clean, f.report);
        assert_eq!(r.psnr_drop(), Some(0.0));
    }
    let jit = jitter_test(&src, 0.05, &out.path().join("j5")).unwrap();
    for r in &jit {
        assert!(r.psnr_drop().unwrap().is_finite());
        let file = read_tensor_file(&r.error_map).unwrap();
        let map = file.grid::<f32>(ERROR_MAP_RECORD).unwrap();
        assert_eq!(map.dims(), (32, 32, 4));
        assert_eq!(TensorFile::from_bytes(&file.to_bytes().unwrap()).unwrap(), file);
    }
}

#[test]
fn fuse_writes_the_clamped_prediction() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let run = tiny_run(data.path(), out.path().to_path_buf());
    let params = init_params::<f32>(&run.model, 2).unwrap();
    let ck = out.path().join("ck.edt");
    save_checkpoint(&ck, &run, &params, &[]).unwrap();
    let s = load_split::<f32>(data.path(), Split::Test).unwrap().remove(0).1;
    let input = out.path().join("in.edt");
    write_tensor_file(&input, &TensorFile::new(vec![Record::grid("pan", &s.pan), Record::grid("lrms", &s.lrms)])).unwrap();
    let output = out.path().join("fused.edt");
    fuse(&ck, &input, &output, None, Precision::F32).unwrap();
    let fused = read_tensor_file(&output).unwrap().grid::<f32>("fused").unwrap();
    assert_eq!(fused, predict(&s, &params, &run.model).unwrap());

    let j = jitter_scale(&s, 0.05).unwrap();
    write_tensor_file(&input, &TensorFile::new(vec![Record::grid("pan", &j.pan), Record::grid("lrms", &j.lrms)])).unwrap();
    fuse(&ck, &input, &output, Some(4.0), Precision::F32).unwrap();
    let fused = read_tensor_file(&output).unwrap().grid::<f32>("fused").unwrap();
    assert_eq!(fused.dims(), (32, 32, 4));
}

#[test]
fn non_finite_state_aborts_naming_the_block() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let run = tiny_run(data.path(), out.path().to_path_buf());
    let mut params = init_params::<f32>(&run.model, 0).unwrap();
    params.get_mut("iter1.efim.w").unwrap().data_mut()[3] = f32::NAN;
    let samples: Vec<_> = load_split::<f32>(data.path(), Split::Train).unwrap().into_iter().map(|(_, s)| s).collect();
    let err = train_from(&run, params, &samples, &samples).unwrap_err();
    match &err {
        Error::NonFinite(msg) => assert!(msg.contains("iter1.efim.w"), "{msg}"),
        other => panic!("unexpected error {other}"),
    }
    let dump = read_tensor_file(&out.path().join("nan_dump.edt")).unwrap();
    assert!(dump.text("__diagnostic__").unwrap().contains("iter1.efim.w"));
}

#[test]
fn ablations_train_every_variant() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let mut base = tiny_run(data.path(), out.path().to_path_buf());
    base.epochs = 1;
    let configs = ablate(&base, AblationMode::Configs, Split::Test, false).unwrap();
    assert_eq!(configs.len(), 5);
    let csv = fs::read_to_string(out.path().join("ablation_configs.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 6);
    assert!(configs.iter().all(|v| v.params > 0 && v.test.psnr.unwrap().is_finite()));

    let again = ablate(&base, AblationMode::Configs, Split::Test, true).unwrap();
    for (a, b) in configs.iter().zip(&again) {
        assert_eq!(a.test, b.test);
    }

    let sweep = ablate(&base, AblationMode::TSweep, Split::Test, false).unwrap();
    let ts: Vec<usize> = sweep.iter().map(|v| v.model.iterations).collect();
    assert_eq!(ts, vec![2, 3, 4, 5]);
}
