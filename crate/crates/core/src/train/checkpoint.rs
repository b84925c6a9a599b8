//! Checkpoints: a `__config__` text record holding the serialized run
//! configuration (plus `#` comment lines with selection metadata),
//! followed by one record per parameter block in layout order.

use std::path::Path;

use crate::data::tensorfile::{read_tensor_file, write_tensor_file, Record, RecordData, TensorFile};
use crate::error::{Error, Result};
use crate::operator::params::{layout, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::blocks::BlockMap;
use crate::tensor::grid::Tensor;
use crate::train::config::RunConfig;

pub const CONFIG_RECORD: &str = "__config__";

pub fn checkpoint_file<T: Scalar>(run: &RunConfig, params: &ParamStore<T>, meta: &[String]) -> TensorFile {
    let mut text = String::new();
    for m in meta {
        text.push_str(&format!("# {m}\n"));
    }
    text.push_str(&run.to_kv());
    let mut records = vec![Record::text(CONFIG_RECORD, text)];
    records.extend(params.iter().map(|(k, t)| Record::tensor(k, t)));
    TensorFile::new(records)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, run: &RunConfig, params: &ParamStore<T>, meta: &[String]) -> Result<()> {
    write_tensor_file(path, &checkpoint_file(run, params, meta))
}

/// A float record as `Tensor<T>`, converting between f32 and f64.
fn tensor_any<T: Scalar>(r: &Record) -> Result<Tensor<T>> {
    let data = match &r.data {
        RecordData::F32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
        RecordData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
        RecordData::Text(_) => {
            return Err(Error::DtypeMismatch {
                name: r.name.clone(),
                stored: "text",
                requested: "float",
            })
        }
    };
    Tensor::from_vec(&r.dims, data)
}

/// Parse a checkpoint and check its blocks against the layout its own
/// configuration implies. Parameters stored in the other precision are
/// converted.
pub fn parse_checkpoint<T: Scalar>(file: &TensorFile) -> Result<(RunConfig, ParamStore<T>)> {
    let run = RunConfig::from_kv(file.text(CONFIG_RECORD)?)?;
    let expected = layout(&run.model);
    let stored = file.records.iter().filter(|r| r.name != CONFIG_RECORD).count();
    if stored != expected.len() {
        return Err(Error::config(format!(
            "checkpoint holds {stored} parameter blocks, its configuration needs {}",
            expected.len()
        )));
    }
    let mut params = BlockMap::new();
    for (key, shape, _) in expected {
        let t = tensor_any::<T>(file.get(&key)?)?;
        if t.dims() != shape.as_slice() {
            return Err(Error::config(format!(
                "checkpoint block `{key}` is {:?}, configuration needs {shape:?}",
                t.dims()
            )));
        }
        params.insert(key, t)?;
    }
    Ok((run, params))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(RunConfig, ParamStore<T>)> {
    parse_checkpoint(&read_tensor_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{init_params, EdnoConfig};

    fn small() -> RunConfig {
        RunConfig {
            model: EdnoConfig {
                channels: 3,
                iterations: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_and_precision_conversion() {
        let run = small();
        let p = init_params::<f32>(&run.model, 4).unwrap();
        let file = checkpoint_file(&run, &p, &["selection=best_val_psnr".into()]);
        let bytes = file.to_bytes().unwrap();
        let back = TensorFile::from_bytes(&bytes).unwrap();
        let (r2, p2) = parse_checkpoint::<f32>(&back).unwrap();
        assert_eq!(r2, run);
        assert_eq!(p2, p);
        let (_, p64) = parse_checkpoint::<f64>(&back).unwrap();
        assert_eq!(p64.cast::<f32>(), p);
    }

    #[test]
    fn mismatched_blocks_are_rejected() {
        let run = small();
        let mut other = run.clone();
        other.model.channels = 4;
        let p = init_params::<f32>(&other.model, 0).unwrap();
        let file = checkpoint_file(&run, &p, &[]);
        assert!(matches!(parse_checkpoint::<f32>(&file), Err(Error::Config(_))));
    }
}
