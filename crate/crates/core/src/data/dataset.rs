//! On-disk synthetic dataset.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.tsv              id, split, seed, scale (one scene per line)
//! scenes/{split}/{id}.edt   records `gt`, `lrms`, `pan` (f32)
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::scene::{generate_scene, SceneSpec};
use crate::data::tensorfile::{read_tensor_file, write_tensor_file, Record, TensorFile};
use crate::data::wald::{wald_degrade, wald_sigma};
use crate::error::{Error, Result};
use crate::operator::sample::SamplePair;
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "id\tsplit\tseed\tscale";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Dataset(format!("unknown split `{s}`")))
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Side of the square full-resolution scene.
    pub size: usize,
    pub bands: usize,
    pub scale: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train: 64,
            val: 8,
            test: 16,
            size: 128,
            bands: 4,
            scale: 4.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub scale: f64,
}

/// Scene, degradation and packaging for one sample.
pub fn make_sample(seed: u64, size: usize, bands: usize, scale: f64) -> Result<SamplePair<f32>> {
    let gt = generate_scene(&SceneSpec::random(seed, size, bands))?;
    wald_degrade(&gt, scale, wald_sigma(scale))
}

/// The manifest entries `spec` describes, with scene seeds drawn in split
/// order from the dataset seed.
pub fn plan(spec: &DatasetSpec) -> Vec<ManifestEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for split in Split::ALL {
        for i in 0..spec.count(split) {
            out.push(ManifestEntry {
                id: format!("{}_{i:04}", split.name()),
                split,
                seed: rng.gen(),
                scale: spec.scale,
            });
        }
    }
    out
}

pub fn sample_path(root: &Path, entry: &ManifestEntry) -> PathBuf {
    root.join("scenes")
        .join(entry.split.name())
        .join(format!("{}.edt", entry.id))
}

pub fn save_sample(path: &Path, sample: &SamplePair<f32>) -> Result<()> {
    let mut records = vec![
        Record::grid("lrms", &sample.lrms),
        Record::grid("pan", &sample.pan),
    ];
    if let Some(gt) = &sample.gt {
        records.insert(0, Record::grid("gt", gt));
    }
    write_tensor_file(path, &TensorFile::new(records))
}

pub fn load_sample<T: Scalar>(path: &Path, scale: f64) -> Result<SamplePair<T>> {
    let file = read_tensor_file(path)?;
    let gt = match file.get("gt") {
        Ok(_) => Some(file.grid::<f32>("gt")?.cast()),
        Err(Error::MissingRecord(_)) => None,
        Err(e) => return Err(e),
    };
    SamplePair::new(
        file.grid::<f32>("pan")?.cast(),
        file.grid::<f32>("lrms")?.cast(),
        gt,
        scale,
    )
}

/// Generate every scene of `spec` under `root` and write the manifest.
pub fn generate_dataset(root: &Path, spec: &DatasetSpec) -> Result<Vec<ManifestEntry>> {
    let entries = plan(spec);
    for split in Split::ALL {
        fs::create_dir_all(root.join("scenes").join(split.name()))?;
    }
    for e in &entries {
        let sample = make_sample(e.seed, spec.size, spec.bands, e.scale)?;
        save_sample(&sample_path(root, e), &sample)?;
    }
    write_manifest(root, &entries)?;
    Ok(entries)
}

pub fn write_manifest(root: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", e.id, e.split, e.seed, e.scale));
    }
    crate::data::tensorfile::write_atomic(&root.join(MANIFEST), text.as_bytes())
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Dataset(format!("{} has an unexpected header", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = || Error::Dataset(format!("manifest line {}: `{line}`", n + 2));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(ManifestEntry {
                id: f[0].to_string(),
                split: f[1].parse()?,
                seed: f[2].parse().map_err(|_| bad())?,
                scale: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// All samples of one split, in manifest order.
pub fn load_split<T: Scalar>(root: &Path, split: Split) -> Result<Vec<(String, SamplePair<T>)>> {
    let entries: Vec<ManifestEntry> = read_manifest(root)?
        .into_iter()
        .filter(|e| e.split == split)
        .collect();
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "no `{split}` samples in {}",
            root.display()
        )));
    }
    entries
        .iter()
        .map(|e| Ok((e.id.clone(), load_sample(&sample_path(root, e), e.scale)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_seeded_and_ordered() {
        let spec = DatasetSpec {
            train: 3,
            val: 1,
            test: 2,
            ..DatasetSpec::default()
        };
        let a = plan(&spec);
        assert_eq!(a, plan(&spec));
        let ids: Vec<&str> = a.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["train_0000", "train_0001", "train_0002", "val_0000", "test_0000", "test_0001"]);
        let other = plan(&DatasetSpec { seed: 1, ..spec });
        assert_ne!(a[0].seed, other[0].seed);
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            train: 2,
            val: 1,
            test: 1,
            size: 32,
            ..DatasetSpec::default()
        };
        let entries = generate_dataset(dir.path(), &spec).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), entries);
        let train = load_split::<f32>(dir.path(), Split::Train).unwrap();
        assert_eq!(train.len(), 2);
        let direct = make_sample(entries[0].seed, 32, 4, 4.0).unwrap();
        assert_eq!(train[0].1, direct);
        assert_eq!(train[0].1.lrms.dims(), (8, 8, 4));
        let as_f64 = load_split::<f64>(dir.path(), Split::Val).unwrap();
        assert_eq!(as_f64[0].1.pan.dims(), (32, 32, 1));
    }

    #[test]
    fn missing_manifest_is_a_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(Error::Dataset(_))));
    }
}
