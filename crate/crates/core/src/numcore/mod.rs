//! Tensors, reverse-mode differentiation and the binary tensor container.

mod container;
mod gradcheck;
mod graph;
mod tensor;

pub use container::{Container, MAGIC};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GRAD_FLOOR};
pub use graph::{conv_output_len, masked_softmax, sigmoid, Activation, Graph, NodeId, NORM_FLOOR};
pub use tensor::{Scalar, Tensor};

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    map: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self {
            map: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::MissingResource(format!("parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.map.values()
    }

    pub fn num_values(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Zero tensors shaped like each parameter.
    pub fn zeros_like(&self) -> Self {
        Params {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Adds `other[name]` into `self[name]` for every shared name.
    pub fn accumulate(&mut self, other: &Self) {
        for (k, v) in &other.map {
            if let Some(acc) = self.map.get_mut(k) {
                acc.add_assign(v);
            }
        }
    }

    /// Registers every parameter in a graph as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            ids: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), g.param(v.clone())))
                .collect(),
        }
    }

    /// Registers the parameters accepted by `keep` as gradient-tracked leaves.
    pub fn bind_where(&self, g: &mut Graph<T>, keep: impl Fn(&str) -> bool) -> Bound {
        Bound {
            ids: self
                .map
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), g.param(v.clone())))
                .collect(),
        }
    }

    /// Registers every parameter as an untracked constant.
    pub fn bind_constants(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            ids: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), g.constant(v.clone())))
                .collect(),
        }
    }
}

impl Params<f32> {
    pub fn to_container(&self) -> Container {
        self.map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn from_container(c: &Container) -> Self {
        Params {
            map: c.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

/// Graph node ids of parameters registered with [`Params::bind`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    ids: IndexMap<String, NodeId>,
}

impl Bound {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, NodeId)>) -> Self {
        Self {
            ids: pairs.into_iter().collect(),
        }
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingResource(format!("parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Collects gradients of all bound parameters (zeros where unreached).
    pub fn gradients<T: Scalar>(&self, g: &Graph<T>) -> Params<T> {
        Params {
            map: self
                .ids
                .iter()
                .map(|(k, &id)| {
                    let grad = g
                        .grad(id)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(g.shape(id)));
                    (k.clone(), grad)
                })
                .collect(),
        }
    }
}
