use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    /// Hash of the exact bit patterns of every tensor whose name starts
    /// with `prefix`.
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, t) in self.tensors.iter().filter(|(n, _)| n.starts_with(prefix)) {
            name.hash(&mut h);
            t.shape().hash(&mut h);
            for x in t.data() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

/// How a parameter enters a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Skip,
    Constant,
    Trainable,
}

/// Parameters of a store bound as leaves of one graph.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
    trainable: Vec<String>,
}

impl Bound {
    pub fn bind(g: &mut Graph, store: &ParamStore, role: impl Fn(&str) -> Role) -> Bound {
        let mut b = Bound::default();
        for (name, t) in store.iter() {
            let v = match role(name) {
                Role::Skip => continue,
                Role::Constant => g.constant(t.clone()),
                Role::Trainable => {
                    b.trainable.push(name.clone());
                    g.param(t.clone())
                }
            };
            b.vars.insert(name.clone(), v);
        }
        b
    }

    /// Binding over leaves created by the caller, all treated as trainable.
    pub fn from_vars(pairs: impl IntoIterator<Item = (String, Var)>) -> Bound {
        let mut b = Bound::default();
        for (name, v) in pairs {
            b.trainable.push(name.clone());
            b.vars.insert(name, v);
        }
        b
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter {name:?} is not bound")))
    }

    /// Gradients of the trainable leaves after `g.backward`; leaves the
    /// loss does not reach get zeros.
    pub fn grads(&self, g: &Graph) -> Grads {
        let mut out = Grads::default();
        for name in &self.trainable {
            let v = self.vars[name];
            let grad = match g.grad(v) {
                Some(t) => t.clone(),
                None => Tensor::zeros(g.value(v).shape()),
            };
            out.0.insert(name.clone(), grad);
        }
        out
    }
}

/// Gradients keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grads(pub BTreeMap<String, Tensor>);

impl Grads {
    /// Adds `other` into `self`; names missing on either side are taken
    /// as zero.
    pub fn accumulate(&mut self, other: &Grads) {
        for (name, t) in &other.0 {
            match self.0.get_mut(name) {
                Some(acc) => acc.add_assign(t),
                None => {
                    self.0.insert(name.clone(), t.clone());
                }
            }
        }
    }

    /// Sum of a sequence of gradients, added in order.
    pub fn sum_in_order<'a>(parts: impl IntoIterator<Item = &'a Grads>) -> Grads {
        let mut acc = Grads::default();
        for p in parts {
            acc.accumulate(p);
        }
        acc
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.0.values_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norms(&self) -> Vec<(String, f64)> {
        self.0.iter().map(|(n, t)| (n.clone(), t.norm())).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.0.values().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.values().all(Tensor::all_finite)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }
}

/// `U(−a, a)` matrix.
pub fn uniform(rows: usize, cols: usize, a: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches")
}
