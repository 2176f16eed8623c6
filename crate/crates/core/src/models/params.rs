//! Named parameter registry.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ModelError;
use crate::math;
use crate::numerics::{Tensor, XorShift64};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
}

/// Parameters in creation order; the index is the graph parameter id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.entries[index].tensor
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].tensor
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn push(&mut self, name: String, tensor: Tensor) -> usize {
        debug_assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, tensor });
        self.entries.len() - 1
    }

    /// Glorot-uniform `(fan_in × fan_out)` matrix.
    pub(crate) fn xavier(
        &mut self,
        name: String,
        fan_in: usize,
        fan_out: usize,
        rng: &mut XorShift64,
    ) -> usize {
        let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-a, a)).collect();
        let t = Tensor::new(alloc::vec![fan_in, fan_out], data).expect("shape");
        self.push(name, t)
    }

    pub(crate) fn constant(&mut self, name: String, len: usize, value: f64) -> usize {
        self.push(name, Tensor::full(alloc::vec![len], value))
    }

    /// All values concatenated in registry order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.tensor.data().iter().copied())
            .collect()
    }

    /// Same layout with `values` substituted, in [`ParamStore::flatten`] order.
    pub fn unflatten(&self, values: &[f64]) -> Result<Self, ModelError> {
        if values.len() != self.scalar_count() {
            return Err(ModelError::Params(format!(
                "expected {} values, got {}",
                self.scalar_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        let mut out = self.clone();
        for e in &mut out.entries {
            let n = e.tensor.numel();
            e.tensor
                .data_mut()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<(), ModelError> {
        if self.entries.len() != other.entries.len() {
            return Err(ModelError::Params(format!(
                "expected {} tensors, got {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                return Err(ModelError::Params(format!(
                    "expected `{}` {:?}, got `{}` {:?}",
                    a.name,
                    a.tensor.shape(),
                    b.name,
                    b.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}
