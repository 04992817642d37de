#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsegan::corpus::random_embeddings;
use sparsegan::diff::{Graph, Tensor, Var};
use sparsegan::nets::{init_model, Bound, ModelConfig, ParamStore};

pub fn small_config(vocab: usize, d: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        d,
        layers: 2,
        critic_channels: 4,
        critic_widths: vec![3],
    }
}

pub fn small_model(cfg: &ModelConfig, seed: u64) -> ParamStore {
    let emb = random_embeddings(cfg.vocab_size, cfg.d, 0.5, seed);
    init_model(cfg, emb, seed).unwrap()
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters whose names pass `keep`, as grad-check inputs plus names.
pub fn select(store: &ParamStore, keep: impl Fn(&str) -> bool) -> (Vec<String>, Vec<Tensor>) {
    store
        .iter()
        .filter(|(n, _)| keep(n))
        .map(|(n, t)| (n.clone(), t.clone()))
        .unzip()
}

/// Binds `vars[..names.len()]` under `names` and every other store entry
/// as a constant.
pub fn bind_mixed(g: &mut Graph, store: &ParamStore, names: &[String], vars: &[Var]) -> Bound {
    let mut pairs: Vec<(String, Var)> = names.iter().cloned().zip(vars.iter().copied()).collect();
    for (n, t) in store.iter() {
        if !names.contains(n) {
            pairs.push((n.clone(), g.constant(t.clone())));
        }
    }
    Bound::from_vars(pairs)
}

/// `Σ wᵢ yᵢ` with fixed, distinct weights.
pub fn weighted_sum(g: &mut Graph, y: Var) -> sparsegan::Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + ((i * 7919) % 13) as f64 / 10.0).collect())?;
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}
