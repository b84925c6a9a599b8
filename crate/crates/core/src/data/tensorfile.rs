//! Little-endian named-record container.
//!
//! ```text
//! magic "EDNO" | u32 version (=1) | u64 record count
//! per record: u32 name length | name (UTF-8) | u8 dtype | u32 ndim
//!             | ndim x u64 dims | row-major payload
//! ```
//!
//! dtype codes: 1 = f32, 2 = f64, 3 = UTF-8 text (1-D byte payload, used
//! for configuration headers).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tensor::grid::{RealGrid, Tensor};

pub const MAGIC: &[u8; 4] = b"EDNO";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Text(String),
}

impl RecordData {
    fn code(&self) -> u8 {
        match self {
            RecordData::F32(_) => 1,
            RecordData::F64(_) => 2,
            RecordData::Text(_) => 3,
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            RecordData::F32(_) => "f32",
            RecordData::F64(_) => "f64",
            RecordData::Text(_) => "text",
        }
    }

    fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::Text(s) => s.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        Self {
            name: name.into(),
            dims: t.dims().to_vec(),
            data: to_record_data(t.data()),
        }
    }

    /// A grid is stored as a 3-D `[height, width, channels]` record.
    pub fn grid<T: Scalar>(name: impl Into<String>, g: &RealGrid<T>) -> Self {
        let (h, w, c) = g.dims();
        Self {
            name: name.into(),
            dims: vec![h, w, c],
            data: to_record_data(g.data()),
        }
    }

    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            name: name.into(),
            dims: vec![text.len()],
            data: RecordData::Text(text),
        }
    }
}

fn to_record_data<T: Scalar>(data: &[T]) -> RecordData {
    match T::PRECISION {
        Precision::F32 => RecordData::F32(data.iter().map(|v| v.as_f64() as f32).collect()),
        Precision::F64 => RecordData::F64(data.iter().map(|v| v.as_f64()).collect()),
    }
}

/// An ordered set of records read from or destined for disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub records: Vec<Record>,
}

impl TensorFile {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::MissingRecord(name.to_string()))
    }

    /// Numeric record with the exact element type `T`.
    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let r = self.get(name)?;
        let data: Vec<T> = match (&r.data, T::PRECISION) {
            (RecordData::F32(v), Precision::F32) => v.iter().map(|&x| T::of(x as f64)).collect(),
            (RecordData::F64(v), Precision::F64) => v.iter().map(|&x| T::of(x)).collect(),
            (stored, _) => {
                return Err(Error::DtypeMismatch {
                    name: name.to_string(),
                    stored: stored.dtype_name(),
                    requested: T::PRECISION.name(),
                })
            }
        };
        Tensor::from_vec(&r.dims, data)
    }

    pub fn grid<T: Scalar>(&self, name: &str) -> Result<RealGrid<T>> {
        let t = self.tensor::<T>(name)?;
        match *t.dims() {
            [h, w, c] => RealGrid::from_vec(h, w, c, t.into_vec()),
            _ => Err(Error::shape(format!(
                "record `{name}` has dims {:?}, expected [height, width, channels]",
                t.dims()
            ))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match &self.get(name)?.data {
            RecordData::Text(s) => Ok(s),
            other => Err(Error::DtypeMismatch {
                name: name.to_string(),
                stored: other.dtype_name(),
                requested: "text",
            }),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            let n: usize = r.dims.iter().product();
            if n != r.data.len() {
                return Err(Error::shape(format!(
                    "record `{}`: dims {:?} hold {n} values, payload has {}",
                    r.name,
                    r.dims,
                    r.data.len()
                )));
            }
            let name = r.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.push(r.data.code());
            out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
            for &d in &r.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &r.data {
                RecordData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                RecordData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                RecordData::Text(s) => out.extend_from_slice(s.as_bytes()),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        cur.pos = 4;
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = cur.u64("record count")?;
        let mut records = Vec::new();
        for i in 0..count {
            let name_len = cur.u32("name length")? as usize;
            let name = std::str::from_utf8(cur.take(name_len, "name")?)
                .map_err(|_| Error::Truncated(format!("record {i}: name is not UTF-8")))?
                .to_string();
            let code = cur.take(1, "dtype")?[0];
            let ndim = cur.u32("ndim")? as usize;
            let mut dims = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                dims.push(cur.u64("dims")? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Truncated(format!("record `{name}`: dims overflow")))?;
            let data = match code {
                1 => RecordData::F32(
                    cur.take(n.saturating_mul(4), &name)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                        .collect(),
                ),
                2 => RecordData::F64(
                    cur.take(n.saturating_mul(8), &name)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                        .collect(),
                ),
                3 => RecordData::Text(
                    String::from_utf8(cur.take(n, &name)?.to_vec())
                        .map_err(|_| Error::Truncated(format!("record `{name}`: text is not UTF-8")))?,
                ),
                other => {
                    return Err(Error::Truncated(format!(
                        "record `{name}`: unknown dtype code {other}"
                    )))
                }
            };
            records.push(Record { name, dims, data });
        }
        Ok(Self { records })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("{what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_tensor_file(path: &Path, file: &TensorFile) -> Result<()> {
    write_atomic(path, &file.to_bytes()?)
}

pub fn read_tensor_file(path: &Path) -> Result<TensorFile> {
    TensorFile::from_bytes(&fs::read(path)?)
}
