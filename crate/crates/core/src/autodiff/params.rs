//! Flat storage for every trainable parameter of a model.
//!
//! Parameters live in one contiguous buffer with a named-entry registry in
//! declaration order. Each training step slices the buffer into trainable
//! leaf tensors, and gradients are gathered back into one flat vector for
//! the optimizer. Declaration order is also the checkpoint serialization
//! order.

use crate::error::{Error, Result};

use super::element::Element;
use super::tensor::Tensor;

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone)]
struct Entry {
    spec: ParamSpec,
    offset: usize,
}

/// Contiguous buffer of all trainable parameters plus the entry registry.
#[derive(Debug, Clone)]
pub struct ParamStore<E: Element> {
    entries: Vec<Entry>,
    data: Vec<E>,
}

impl<E: Element> ParamStore<E> {
    /// Lay out storage for the given specs, zero-initialized.
    pub fn new(specs: Vec<ParamSpec>) -> Self {
        let mut entries = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for spec in specs {
            let n = spec.numel();
            entries.push(Entry { spec, offset });
            offset += n;
        }
        ParamStore {
            entries,
            data: vec![E::zero(); offset],
        }
    }

    pub fn total_len(&self) -> usize {
        self.data.len()
    }

    pub fn num_tensors(&self) -> usize {
        self.entries.len()
    }

    pub fn specs(&self) -> impl Iterator<Item = &ParamSpec> {
        self.entries.iter().map(|e| &e.spec)
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn slice(&self, index: usize) -> &[E] {
        let e = &self.entries[index];
        &self.data[e.offset..e.offset + e.spec.numel()]
    }

    pub fn slice_mut(&mut self, index: usize) -> &mut [E] {
        let e = &self.entries[index];
        let (off, n) = (e.offset, e.spec.numel());
        &mut self.data[off..off + n]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.spec.name == name)
    }

    /// Replace the whole flat buffer (same length required).
    pub fn load_flat(&mut self, values: &[E]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::dimension(
                "ParamStore::load_flat",
                format!("{} values", self.data.len()),
                format!("{} values", values.len()),
            ));
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    /// Create one trainable leaf tensor per entry, in declaration order.
    pub fn leaf_tensors(&self) -> Result<Vec<Tensor<E>>> {
        self.entries
            .iter()
            .map(|e| {
                Tensor::param(
                    e.spec.shape.clone(),
                    self.data[e.offset..e.offset + e.spec.numel()].to_vec(),
                )
            })
            .collect()
    }

    /// Frozen (non-tracking) leaf tensors for inference.
    pub fn frozen_tensors(&self) -> Result<Vec<Tensor<E>>> {
        self.entries
            .iter()
            .map(|e| {
                Tensor::from_vec(
                    e.spec.shape.clone(),
                    self.data[e.offset..e.offset + e.spec.numel()].to_vec(),
                )
            })
            .collect()
    }

    /// Gather accumulated gradients from the leaves produced by
    /// [`leaf_tensors`](Self::leaf_tensors) into one flat vector, zeros where
    /// a leaf never received a gradient.
    pub fn collect_grads(&self, leaves: &[Tensor<E>]) -> Result<Vec<E>> {
        if leaves.len() != self.entries.len() {
            return Err(Error::dimension(
                "ParamStore::collect_grads",
                format!("{} leaves", self.entries.len()),
                format!("{} leaves", leaves.len()),
            ));
        }
        let mut flat = vec![E::zero(); self.data.len()];
        for (entry, leaf) in self.entries.iter().zip(leaves) {
            if let Some(g) = leaf.grad() {
                if g.len() != entry.spec.numel() {
                    return Err(Error::dimension(
                        "ParamStore::collect_grads",
                        format!("{} grad values for {}", entry.spec.numel(), entry.spec.name),
                        format!("{}", g.len()),
                    ));
                }
                flat[entry.offset..entry.offset + g.len()].copy_from_slice(&g);
            }
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "non-finite gradient collected from graph".to_string(),
            ));
        }
        Ok(flat)
    }
}
