use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::Tensor;

/// Ordered map of named tensor blocks. Used for parameters, gradients and
/// optimizer moments; iteration follows insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockMap<T> {
    blocks: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> BlockMap<T> {
    pub fn new() -> Self {
        Self {
            blocks: IndexMap::new(),
        }
    }

    /// Insert a new block; keys must be unique.
    pub fn insert(&mut self, key: impl Into<String>, block: Tensor<T>) -> Result<()> {
        let key = key.into();
        if self.blocks.contains_key(&key) {
            return Err(Error::config(format!("duplicate block key `{key}`")));
        }
        self.blocks.insert(key, block);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Tensor<T>> {
        self.blocks.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Tensor<T>> {
        self.blocks.get_mut(key)
    }

    pub fn require(&self, key: &str) -> Result<&Tensor<T>> {
        self.blocks
            .get(key)
            .ok_or_else(|| Error::config(format!("missing parameter block `{key}`")))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.blocks.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.blocks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.blocks.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total number of scalars across all blocks.
    pub fn scalar_count(&self) -> usize {
        self.blocks.values().map(Tensor::len).sum()
    }

    /// Same keys and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.dims())))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        for t in out.blocks.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = f(*v));
        }
        out
    }

    /// Same key set, same order, same shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|((ka, a), (kb, b))| ka == kb && a.dims() == b.dims())
    }

    /// `self += scale * other`, block by block in key order.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape("block maps have different layouts"));
        }
        for (a, b) in self.blocks.values_mut().zip(other.blocks.values()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    /// First block (in key order) holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.blocks
            .iter()
            .find(|(_, v)| !v.all_finite())
            .map(|(k, _)| k.as_str())
    }

    pub fn cast<U: Scalar>(&self) -> BlockMap<U> {
        BlockMap {
            blocks: self
                .blocks
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}
