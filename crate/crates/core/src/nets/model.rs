use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::init_lstm;
use super::params::{uniform, ParamStore};
use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const EMB: &str = "emb";
pub const GEN: &str = "gen.";
pub const DAE: &str = "dae.";
pub const CRITIC: &str = "critic.";

/// Sizes of every network. Hidden width equals embedding width so that
/// states can be coded over the embedding rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d: usize,
    pub layers: usize,
    pub critic_channels: usize,
    pub critic_widths: Vec<usize>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.critic_channels == 0 {
            return Err(Error::Config("model widths and depth must be positive".into()));
        }
        if self.critic_widths.is_empty() || self.critic_widths.contains(&0) {
            return Err(Error::Config("critic needs at least one positive filter width".into()));
        }
        Ok(())
    }

    pub fn max_width(&self) -> usize {
        self.critic_widths.iter().copied().max().unwrap_or(1)
    }
}

pub fn conv_name(width: usize) -> String {
    format!("critic.conv{width}")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn init_generator(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) {
    let mut rng = rng_for(seed, 1);
    for l in 0..cfg.layers {
        init_lstm(store, &format!("gen.l{l}"), cfg.d, cfg.d, &mut rng);
    }
}

pub fn init_dae(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) {
    let mut rng = rng_for(seed, 2);
    let d = cfg.d;
    for l in 0..cfg.layers {
        let d_in = if l == 0 { d } else { 2 * d };
        init_lstm(store, &format!("dae.enc.f{l}"), d_in, d, &mut rng);
        init_lstm(store, &format!("dae.enc.b{l}"), d_in, d, &mut rng);
    }
    store.insert("dae.bridge.w", uniform(2 * d, d, 1.0 / (2.0 * d as f64).sqrt(), &mut rng));
    store.insert("dae.bridge.b", Tensor::zeros(&[1, d]));
    for l in 0..cfg.layers {
        init_lstm(store, &format!("dae.dec.l{l}"), d, d, &mut rng);
    }
}

pub fn init_critic(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) {
    let mut rng = rng_for(seed, 3);
    let (d, c) = (cfg.d, cfg.critic_channels);
    for &w in &cfg.critic_widths {
        let a = 1.0 / ((w * d) as f64).sqrt();
        let f = uniform(w * d, c, a, &mut rng).reshape(vec![w, d, c]).expect("same size");
        store.insert(conv_name(w), f);
    }
    let total = c * cfg.critic_widths.len();
    store.insert("critic.w", uniform(total, 1, 1.0 / (total as f64).sqrt(), &mut rng));
    store.insert("critic.b", Tensor::zeros(&[1, 1]));
}

/// Every network plus the shared embedding table.
pub fn init_model(cfg: &ModelConfig, emb: Tensor, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    if emb.shape() != [cfg.vocab_size, cfg.d] {
        return Err(Error::dim("embedding table", emb.shape(), &[cfg.vocab_size, cfg.d]));
    }
    let mut store = ParamStore::new();
    store.insert(EMB, emb);
    init_generator(&mut store, cfg, seed);
    init_dae(&mut store, cfg, seed);
    init_critic(&mut store, cfg, seed);
    Ok(store)
}
