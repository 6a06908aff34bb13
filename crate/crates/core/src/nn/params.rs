use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::graph::{Gradients, Graph, Var};
use super::scalar::Real;
use super::tensor::Tensor;

/// Ordered collection of named parameter tensors.
#[derive(Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> std::fmt::Debug for ParamStore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.iter().map(|(n, t)| (n, t.shape()))).finish()
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameters of a store placed on a graph, in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Normal(0, std) initialised tensor.
    pub fn push_normal(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
        self.push(name, Tensor::from_vec(shape, data))
    }

    pub fn push_const(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.push(name, Tensor::full(shape, T::from_f64_lossy(value)))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| graph.leaf(t.clone(), trainable)).collect() }
    }

    /// Collects the gradient of every bound parameter; missing ones are zero.
    pub fn collect_grads(&self, grads: &mut Gradients<T>, bound: &Bound) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }

    /// SHA-256 over names, shapes and little-endian values, in store order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            h.update(T::to_le_bytes_vec(t.data()));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}
