use crate::diff::Tensor;
use crate::error::Result;
use crate::nets::{Grads, ParamStore};

/// Adam with bias correction. Moment estimates are kept per parameter
/// name and created on first use.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: ParamStore::new(),
            v: ParamStore::new(),
        }
    }

    /// Applies one update to every parameter named in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in &grads.0 {
            if !self.m.contains(name) {
                self.m.insert(name.clone(), Tensor::zeros(g.shape()));
                self.v.insert(name.clone(), Tensor::zeros(g.shape()));
            }
            let m = self.m.get_mut(name)?.data_mut();
            for (mi, gi) in m.iter_mut().zip(g.data()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let v = self.v.get_mut(name)?.data_mut();
            for (vi, gi) in v.iter_mut().zip(g.data()) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let (m, v) = (self.m.get(name)?.data(), self.v.get(name)?.data());
            let p = params.get_mut(name)?.data_mut();
            for ((pi, mi), vi) in p.iter_mut().zip(m).zip(v) {
                *pi -= self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moments as tensors named `{prefix}m.{name}` and `{prefix}v.{name}`.
    pub fn export(&self, prefix: &str, into: &mut ParamStore) {
        for (n, t) in self.m.iter() {
            into.insert(format!("{prefix}m.{n}"), t.clone());
        }
        for (n, t) in self.v.iter() {
            into.insert(format!("{prefix}v.{n}"), t.clone());
        }
    }

    /// Removes the tensors written by [`Adam::export`] from `from`.
    pub fn import(&mut self, prefix: &str, t: u64, from: &mut ParamStore) {
        self.t = t;
        let names: Vec<String> = from.names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
        for full in names {
            let tensor = from.remove(&full).expect("listed above");
            let rest = &full[prefix.len()..];
            if let Some(n) = rest.strip_prefix("m.") {
                self.m.insert(n, tensor);
            } else if let Some(n) = rest.strip_prefix("v.") {
                self.v.insert(n, tensor);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr·g/(|g|+eps) ≈ lr·sign(g).
        let mut p = ParamStore::new();
        p.insert("x", Tensor::row(vec![1.0, 1.0]));
        let mut g = Grads::default();
        g.0.insert("x".into(), Tensor::row(vec![2.0, -0.5]));
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        adam.step(&mut p, &g).unwrap();
        let x = p.get("x").unwrap().data();
        assert!((x[0] - 0.9).abs() < 1e-8 && (x[1] - 1.1).abs() < 1e-8);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::row(vec![3.0]));
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8);
        for _ in 0..2000 {
            let x = p.get("x").unwrap().data()[0];
            let mut g = Grads::default();
            g.0.insert("x".into(), Tensor::row(vec![2.0 * (x - 1.0)]));
            adam.step(&mut p, &g).unwrap();
        }
        assert!((p.get("x").unwrap().data()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn export_import_round_trip() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::row(vec![3.0]));
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8);
        let mut g = Grads::default();
        g.0.insert("x".into(), Tensor::row(vec![1.0]));
        adam.step(&mut p, &g).unwrap();
        let mut store = ParamStore::new();
        adam.export("opt.", &mut store);
        let mut back = Adam::new(0.05, 0.9, 0.999, 1e-8);
        back.import("opt.", adam.t, &mut store);
        assert_eq!(back, adam);
        assert!(store.is_empty());
    }
}
