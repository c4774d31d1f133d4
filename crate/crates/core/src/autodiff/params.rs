use super::tape::{Tape, Value};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Record every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams { values: self.tensors.iter().map(|t| tape.param(t.clone())).collect() }
    }

    /// Replace all values; shapes must match.
    pub fn load_values(&mut self, other: &[Tensor]) -> Result<()> {
        if other.len() != self.tensors.len() {
            return Err(Error::shape("load_values", format!("{} tensors for {} parameters", other.len(), self.len())));
        }
        for (i, (dst, src)) in self.tensors.iter_mut().zip(other).enumerate() {
            if dst.shape() != src.shape() {
                return Err(Error::shape(
                    "load_values",
                    format!("{}: {:?} vs {:?}", self.names[i], dst.shape(), src.shape()),
                ));
            }
            *dst = src.clone();
        }
        Ok(())
    }
}

/// Tape handles for a [`ParamStore`], valid for one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    values: Vec<Value>,
}

impl BoundParams {
    pub fn get(&self, id: ParamId) -> Value {
        self.values[id.0]
    }

    /// Gradients in store order; untouched parameters get zeros.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.values
            .iter()
            .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
            .collect()
    }
}
