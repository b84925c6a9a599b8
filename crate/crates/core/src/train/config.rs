use std::path::PathBuf;

use crate::data::dataset::Split;
use crate::error::{Error, Result};
use crate::operator::config::{parse_kv, EdnoConfig, FlagSet};
use crate::scalar::Precision;
use crate::train::adam::AdamConfig;

/// Desk-scale default epoch budget.
pub const DESK_EPOCHS: usize = 200;
/// Epoch budget of the original full-scale schedule, kept as a preset.
pub const FULL_SCALE_EPOCHS: usize = 1050;

/// Everything that determines a training run. Serialized as key=value
/// lines into checkpoints and result headers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: EdnoConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Validate every this many epochs (and always after the last one).
    pub eval_every: usize,
    pub train_split: Split,
    pub val_split: Split,
    /// Use only the first N samples of each split, in manifest order.
    pub limit: Option<usize>,
    pub max_steps: Option<u64>,
    /// Wall-clock budget in seconds. Stopping on it makes the run length
    /// machine-dependent; everything before the stop is still deterministic.
    pub time_limit: Option<f64>,
    /// Stop once validation PSNR reaches this value.
    pub target_psnr: Option<f64>,
    pub precision: Precision,
    /// Worker threads for per-sample work; 0 picks the available cores.
    /// Results depend on neither this nor `out`, so neither is serialized
    /// (two runs differing only there produce identical artifacts).
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: EdnoConfig::default(),
            adam: AdamConfig::default(),
            epochs: DESK_EPOCHS,
            batch_size: 8,
            seed: 0,
            dataset: PathBuf::from("data"),
            out: PathBuf::from("runs/default"),
            eval_every: 1,
            train_split: Split::Train,
            val_split: Split::Val,
            limit: None,
            max_steps: None,
            time_limit: None,
            target_psnr: None,
            precision: Precision::F32,
            threads: 0,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value `{value}` for `{key}`")))
}

fn opt<V: std::str::FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<V: std::fmt::Display>(v: &Option<V>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size and eval_every must be at least 1"));
        }
        if self.limit == Some(0) {
            return Err(Error::config("limit must be at least 1"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::config("invalid Adam hyperparameters"));
        }
        Ok(())
    }

    /// Apply one key; returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: &str, flags: &mut FlagSet) -> Result<bool> {
        if self.model.set(key, value, flags)? {
            return Ok(true);
        }
        match key {
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "eps" => self.adam.eps = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dataset" => self.dataset = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "eval_every" => self.eval_every = parse(key, value)?,
            "train_split" => self.train_split = value.parse()?,
            "val_split" => self.val_split = value.parse()?,
            "limit" => self.limit = opt(key, value)?,
            "max_steps" => self.max_steps = opt(key, value)?,
            "time_limit" => self.time_limit = opt(key, value)?,
            "target_psnr" => self.target_psnr = opt(key, value)?,
            "precision" => self.precision = value.parse().map_err(Error::Config)?,
            "threads" => self.threads = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Apply key=value text on top of the current values.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut flags = FlagSet::default();
        for (k, v) in parse_kv(text)? {
            if !self.set(&k, &v, &mut flags)? {
                return Err(Error::config(format!("unknown config key `{k}`")));
            }
        }
        self.model.ablation = flags.resolve(self.model.ablation)?;
        self.validate()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let a = &self.adam;
        let mut s = self.model.to_kv();
        s.push_str(&format!(
            "lr={}\nbeta1={}\nbeta2={}\neps={}\nepochs={}\nbatch_size={}\nseed={}\n",
            a.lr, a.beta1, a.beta2, a.eps, self.epochs, self.batch_size, self.seed
        ));
        s.push_str(&format!(
            "dataset={}\neval_every={}\ntrain_split={}\nval_split={}\n",
            self.dataset.display(),
            self.eval_every,
            self.train_split,
            self.val_split
        ));
        s.push_str(&format!(
            "limit={}\nmax_steps={}\ntime_limit={}\ntarget_psnr={}\nprecision={}\n",
            show(&self.limit),
            show(&self.max_steps),
            show(&self.time_limit),
            show(&self.target_psnr),
            self.precision.name()
        ));
        s
    }

    /// The serialized config as `# `-prefixed comment lines.
    pub fn header_lines(&self) -> Vec<String> {
        self.to_kv().lines().map(str::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::config::Ablation;

    #[test]
    fn defaults_follow_the_optimizer_settings() {
        let c = RunConfig::default();
        assert_eq!((c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.eps), (1e-4, 0.9, 0.999, 1e-8));
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.epochs, DESK_EPOCHS);
    }

    #[test]
    fn kv_round_trip() {
        let mut c = RunConfig::default();
        c.model.ablation = Ablation::PhaseOnly;
        c.model.iterations = 3;
        c.limit = Some(8);
        c.time_limit = Some(900.5);
        c.val_split = Split::Train;
        c.precision = Precision::F64;
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
        c.out = PathBuf::from("elsewhere");
        c.threads = 3;
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap().to_kv(), c.to_kv());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_kv("learning_rate=1").is_err());
        assert!(RunConfig::from_kv("batch_size=0").is_err());
    }
}
