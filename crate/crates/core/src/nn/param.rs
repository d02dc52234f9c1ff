use std::collections::HashMap;

use ndarray::ArrayD;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Handle to a named tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Position in the store, matching [`Session::param_grads`] indexing.
    ///
    /// [`Session::param_grads`]: crate::nn::Session::param_grads
    pub fn index(&self) -> usize {
        self.0
    }
}

pub(crate) struct ParamEntry<T: Scalar> {
    pub name: String,
    pub value: ArrayD<T>,
    /// Non-trainable entries (batch-norm running statistics) are skipped by
    /// optimizers but still checkpointed.
    pub trainable: bool,
}

/// Flat store of named model tensors. One store per model; the checkpoint
/// format serializes it wholesale.
pub struct ParamStore<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id.0);
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Mark a tensor (non-)trainable, used to freeze submodels loaded into a
    /// larger store.
    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total number of scalar elements across trainable tensors.
    pub fn num_trainable_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Export all tensors as `f64` for checkpointing.
    pub fn export(&self) -> Vec<(String, ArrayD<f64>)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.mapv(|v| v.to_f64())))
            .collect()
    }

    /// Overwrite values from named `f64` tensors. Every store entry must be
    /// present with a matching shape.
    pub fn import(&mut self, tensors: &HashMap<String, ArrayD<f64>>) -> Result<()> {
        for e in &mut self.entries {
            let src = tensors.get(&e.name).ok_or_else(|| {
                Error::format(format!("checkpoint is missing tensor {}", e.name))
            })?;
            if src.shape() != e.value.shape() {
                return Err(Error::format(format!(
                    "checkpoint tensor {} has shape {:?}, expected {:?}",
                    e.name,
                    src.shape(),
                    e.value.shape()
                )));
            }
            e.value = src.mapv(T::from_f64);
        }
        Ok(())
    }
}
