use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Architectural variant. At most one ablation is active at a time, which
/// the enum enforces by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Config I: a learned complex 1x1 map on the raw spectrum.
    VanillaFno,
    /// Config II: fuse phase only, keep the latent magnitude.
    PhaseOnly,
    /// Config III: fuse magnitude only, keep the latent phase.
    MagnitudeOnly,
    /// Config IV: no depthwise stage in the magnitude branch.
    NoDepthwise,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::VanillaFno,
        Ablation::PhaseOnly,
        Ablation::MagnitudeOnly,
        Ablation::NoDepthwise,
        Ablation::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::VanillaFno => "vanilla_fno",
            Ablation::PhaseOnly => "phase_only",
            Ablation::MagnitudeOnly => "magnitude_only",
            Ablation::NoDepthwise => "no_depthwise",
        }
    }

    /// Roman-numeral label used in ablation tables ("-" for the full model).
    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::VanillaFno => "I",
            Ablation::PhaseOnly => "II",
            Ablation::MagnitudeOnly => "III",
            Ablation::NoDepthwise => "IV",
        }
    }

    pub fn uses_phase_fusion(self) -> bool {
        matches!(self, Ablation::Full | Ablation::PhaseOnly | Ablation::NoDepthwise)
    }

    pub fn uses_magnitude_fusion(self) -> bool {
        matches!(
            self,
            Ablation::Full | Ablation::MagnitudeOnly | Ablation::NoDepthwise
        )
    }

    pub fn uses_depthwise(self) -> bool {
        matches!(self, Ablation::Full | Ablation::MagnitudeOnly)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdnoConfig {
    /// Latent width C.
    pub channels: usize,
    /// Number of feature interaction layers T.
    pub iterations: usize,
    /// PAN / LR-MS resolution ratio the model is trained at.
    pub scale: f64,
    /// LR-MS spectral bands B.
    pub bands: usize,
    /// Weight of the frequency loss term.
    pub lambda: f64,
    pub ablation: Ablation,
}

impl Default for EdnoConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            iterations: 4,
            scale: 4.0,
            bands: 4,
            lambda: 0.1,
            ablation: Ablation::Full,
        }
    }
}

const FLAG_KEYS: [(&str, Ablation); 4] = [
    ("vanilla_fno", Ablation::VanillaFno),
    ("phase_only", Ablation::PhaseOnly),
    ("magnitude_only", Ablation::MagnitudeOnly),
    ("no_depthwise", Ablation::NoDepthwise),
];

impl EdnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("channels must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if self.bands == 0 {
            return Err(Error::config("bands must be at least 1"));
        }
        if !(self.scale > 1.0 && self.scale.is_finite()) {
            return Err(Error::config(format!("scale must be > 1, got {}", self.scale)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Key=value lines, one per field; the ablation is written as four
    /// boolean flags.
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "channels={}\niterations={}\nscale={}\nbands={}\nlambda={}\n",
            self.channels, self.iterations, self.scale, self.bands, self.lambda
        );
        for (key, a) in FLAG_KEYS {
            s.push_str(&format!("{key}={}\n", self.ablation == a));
        }
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut flags = FlagSet::default();
        for (k, v) in parse_kv(text)? {
            if !cfg.set(&k, &v, &mut flags)? {
                return Err(Error::config(format!("unknown config key `{k}`")));
            }
        }
        cfg.ablation = flags.resolve(cfg.ablation)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key; returns false if the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str, flags: &mut FlagSet) -> Result<bool> {
        match key {
            "channels" | "C" => self.channels = parse(key, value)?,
            "iterations" | "T" => self.iterations = parse(key, value)?,
            "scale" | "r" => self.scale = parse(key, value)?,
            "bands" | "B" => self.bands = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            _ => {
                let Some(&(_, a)) = FLAG_KEYS.iter().find(|(k, _)| *k == key) else {
                    return Ok(false);
                };
                if parse::<bool>(key, value)? {
                    flags.set.push(a);
                }
            }
        }
        Ok(true)
    }
}

/// Ablation flags collected while parsing; at most one may be true.
#[derive(Debug, Default)]
pub struct FlagSet {
    set: Vec<Ablation>,
}

impl FlagSet {
    pub fn resolve(self, fallback: Ablation) -> Result<Ablation> {
        match self.set.as_slice() {
            [] => Ok(fallback),
            [a] if fallback == Ablation::Full || fallback == *a => Ok(*a),
            _ => Err(Error::config(format!(
                "at most one ablation flag may be set, got {:?}",
                self.set.iter().map(|a| a.name()).collect::<Vec<_>>()
            ))),
        }
    }
}

pub(crate) fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value `{value}` for `{key}`")))
}

/// Split `key=value` lines. Blank lines and `#` comments are ignored.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
