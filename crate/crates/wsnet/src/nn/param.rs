//! Named parameter storage shared across layers.

use ndarray::ArrayD;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// All learnable tensors of one network, addressed by dense ids. Layer
/// structs hold `ParamId`s instead of the tensors themselves so per-sample
/// forward/backward can run in parallel against an immutable store.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ArrayD<f32>>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: ArrayD<f32>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f32> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f32> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &ArrayD<f32>)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (ParamId(i), self.names[i].as_str(), v))
    }

    pub fn total_len(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Fresh gradient store with zeros matching every parameter shape.
    pub fn zero_grads(&self) -> GradStore {
        GradStore {
            values: self
                .values
                .iter()
                .map(|v| ArrayD::zeros(v.raw_dim()))
                .collect(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulator indexed like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore {
    values: Vec<ArrayD<f32>>,
}

impl GradStore {
    pub fn get(&self, id: ParamId) -> &ArrayD<f32> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f32> {
        &mut self.values[id.0]
    }

    /// Accumulate another gradient store (same parameter layout) into this one.
    /// Order-stable summation keeps training bit-deterministic.
    pub fn add_assign(&mut self, other: &GradStore) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            a.zip_mut_with(b, |x, &y| *x += y);
        }
    }

    pub fn scale(&mut self, s: f32) {
        for v in self.values.iter_mut() {
            v.mapv_inplace(|x| x * s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ArrayD<f32>)> {
        self.values.iter().enumerate().map(|(i, v)| (ParamId(i), v))
    }
}
