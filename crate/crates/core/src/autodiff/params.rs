use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use super::array::Array;
use super::graph::Graph;

static NEXT_STORE: AtomicU32 = AtomicU32::new(1);

/// Identifies one parameter of one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    store: u32,
    index: usize,
}

impl ParamId {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Named trainable arrays plus their accumulated gradients.
///
/// A clone keeps the tag of its original, so the same [`ParamId`]s address it.
#[derive(Debug, Clone)]
pub struct ParamStore {
    tag: u32,
    names: Vec<String>,
    values: Vec<Array>,
    grads: Vec<Vec<f64>>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            tag: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        self.grads.push(vec![0.0; value.len()]);
        self.values.push(value);
        self.names.push(name.into());
        ParamId {
            store: self.tag,
            index: self.values.len() - 1,
        }
    }

    /// Weight matrix `fan_in × fan_out` drawn uniformly from
    /// `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_weight(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let value = Array::new(vec![fan_in, fan_out], data).expect("shape matches");
        self.add(name, value)
    }

    pub fn add_bias(&mut self, name: impl Into<String>, n: usize) -> ParamId {
        self.add(name, Array::zeros(&[n]))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        let tag = self.tag;
        (0..self.values.len()).map(move |index| ParamId { store: tag, index })
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(|index| ParamId {
            store: self.tag,
            index,
        })
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.index]
    }

    pub fn value(&self, id: ParamId) -> &Array {
        debug_assert_eq!(id.store, self.tag, "parameter from another store");
        &self.values[id.index]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id.index]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.index]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.index]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds the gradients of every parameter of this store bound into `graph`.
    pub fn accumulate(&mut self, graph: &Graph) {
        for &(node, id) in graph.param_bindings() {
            if id.store != self.tag {
                continue;
            }
            let t = super::Tensor::from_node(node);
            if let Some(g) = graph.grad(t) {
                for (acc, &v) in self.grads[id.index].iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Array, &[f64])> {
        self.values
            .iter_mut()
            .zip(self.grads.iter().map(Vec::as_slice))
    }
}
