use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edno_core::data::{generate_dataset, DatasetSpec, Split};
use edno_core::operator::EdnoConfig;
use edno_core::train::experiments::EvalSource;
use edno_core::train::gradcheck::{MODEL_CHECK_SCALE, MODEL_CHECK_STEP};
use edno_core::train::{ablate, evaluate, fuse, jitter_test, model_grad_check, scale_sweep, train, AblationMode, RunConfig};
use edno_core::{Error, Precision, Result};

#[derive(Parser)]
#[command(name = "edno", version, about = "Frequency-domain neural operator for pansharpening")]
struct Cli {
    /// key=value run configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    precision: Option<Precision>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra key=value overrides, applied after --config
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root (defaults to the one recorded in the checkpoint config)
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset
    GenData {
        #[arg(long, default_value_t = 64)]
        train: usize,
        #[arg(long, default_value_t = 8)]
        val: usize,
        #[arg(long, default_value_t = 16)]
        test: usize,
        /// Full-resolution scene side
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = 4.0)]
        scale: f64,
    },
    /// Train a model
    Train,
    /// Fuse one pan/lrms pair stored in a TensorFile
    Fuse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Metrics of a checkpoint on a dataset split
    Evaluate {
        #[command(flatten)]
        source: Source,
        /// Withhold ground truth (no-reference metrics only)
        #[arg(long)]
        no_gt: bool,
    },
    /// Train and compare model variants
    Ablate {
        #[arg(long)]
        mode: AblationMode,
        #[arg(long, default_value = "test")]
        test_split: Split,
        /// Reuse finished variants found under --out
        #[arg(long)]
        resume: bool,
    },
    /// Zero-shot evaluation at several scales against bicubic upsampling
    ScaleSweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,6,8,10")]
        scales: Vec<f64>,
    },
    /// Evaluate with the PAN resized by a percentage
    Jitter {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 5.0)]
        pct: f64,
    },
    /// Finite-difference check of the full model gradient in f64
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        iterations: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        /// Output/LR ratio; non-integer by default so no spectrum bin is
        /// real by symmetry (its phase would sit on the branch cut)
        #[arg(long, default_value_t = MODEL_CHECK_SCALE)]
        scale: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Central-difference step
        #[arg(long, default_value_t = MODEL_CHECK_STEP)]
        step: f64,
        /// Coordinates probed per parameter block
        #[arg(long, default_value_t = usize::MAX)]
        max_per_block: usize,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut run = RunConfig::default();
        if let Some(path) = &self.config {
            run.apply_kv(&fs::read_to_string(path)?)?;
        }
        if !self.set.is_empty() {
            run.apply_kv(&self.set.join("\n"))?;
        }
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(o) = &self.out {
            run.out = o.clone();
        }
        if let Some(p) = self.precision {
            run.precision = p;
        }
        if let Some(t) = self.threads {
            run.threads = t;
        }
        run.validate()?;
        Ok(run)
    }

    fn out_dir(&self, fallback: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
    }

    fn eval_source(&self, s: &Source) -> Result<EvalSource> {
        let run = self.run_config()?;
        let dataset = match &s.dataset {
            Some(d) => d.clone(),
            None => edno_core::train::checkpoint::load_checkpoint::<f32>(&s.checkpoint)?.0.dataset,
        };
        Ok(EvalSource {
            checkpoint: s.checkpoint.clone(),
            dataset,
            split: s.split,
            precision: run.precision,
            threads: run.threads,
        })
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Exit status on success: 0, or 2 when a check ran but failed.
fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::GenData { train, val, test, size, bands, scale } => {
            let spec = DatasetSpec {
                train: *train,
                val: *val,
                test: *test,
                size: *size,
                bands: *bands,
                scale: *scale,
                seed: cli.seed.unwrap_or(0),
            };
            let root = cli.out_dir("data");
            let entries = generate_dataset(&root, &spec)?;
            println!("wrote {} samples to {}", entries.len(), root.display());
        }
        Command::Train => {
            let run = cli.run_config()?;
            let s = train(&run)?;
            println!(
                "stop={} epochs={} steps={} best_val_psnr={:.4} (epoch {}) final_val_psnr={:.4} seconds={:.1}",
                s.stop.name(),
                s.epochs,
                s.steps,
                s.best_val_psnr,
                s.best_epoch,
                s.final_val_psnr,
                s.seconds
            );
            println!("checkpoint {}", s.best_path.display());
        }
        Command::Fuse { checkpoint, input, output, scale } => {
            let precision = cli.precision.unwrap_or(Precision::F32);
            fuse(checkpoint, input, output, *scale, precision)?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate { source, no_gt } => {
            let src = cli.eval_source(source)?;
            let out = cli.out_dir("eval");
            fs::create_dir_all(&out)?;
            let csv = out.join(format!("metrics_{}.csv", src.split));
            let rows = evaluate(&src, &csv, *no_gt)?;
            let mean = edno_core::metrics::MetricReport::mean(&rows.iter().map(|r| r.report).collect::<Vec<_>>());
            println!(
                "{} samples: psnr={} ssim={} qnr={:.4} -> {}",
                rows.len(),
                fmt(mean.psnr),
                fmt(mean.ssim),
                mean.qnr,
                csv.display()
            );
        }
        Command::Ablate { mode, test_split, resume } => {
            let run = cli.run_config()?;
            for v in ablate(&run, *mode, *test_split, *resume)? {
                println!("{:<16} params={:<7} test_psnr={}", v.name, v.params, fmt(v.test.psnr));
            }
        }
        Command::ScaleSweep { source, scales } => {
            let src = cli.eval_source(source)?;
            for r in scale_sweep(&src, scales, &cli.out_dir("scale_sweep"))? {
                println!("{:<8} x{:<5} psnr={}", r.method, r.scale, fmt(r.mean.psnr));
            }
        }
        Command::Jitter { source, pct } => {
            let src = cli.eval_source(source)?;
            let rows = jitter_test(&src, pct / 100.0, &cli.out_dir("jitter"))?;
            let drops: Vec<f64> = rows.iter().filter_map(|r| r.psnr_drop()).collect();
            let mean = drops.iter().sum::<f64>() / drops.len().max(1) as f64;
            println!("{} samples, mean PSNR drop {mean:.4} dB", rows.len());
        }
        Command::Gradcheck {
            channels,
            iterations,
            size,
            bands,
            scale,
            tolerance,
            step,
            max_per_block,
        } => {
            let cfg = EdnoConfig {
                channels: *channels,
                iterations: *iterations,
                bands: *bands,
                scale: *scale,
                ..EdnoConfig::default()
            };
            let report = model_grad_check(&cfg, *size, *scale, cli.seed.unwrap_or(0), *step, *tolerance, *max_per_block)?;
            for b in &report.blocks {
                println!("{:<24} rel_error={:.3e} checked={} kinks={}", b.key, b.rel_error, b.checked, b.kinks);
            }
            println!(
                "max_rel_error={:.3e} kink_fraction={:.3}",
                report.max_rel_error(),
                report.kink_fraction()
            );
            if !report.passed() {
                eprintln!("gradient check failed at tolerance {tolerance}");
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) => 3,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
