use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{EncoderConfig, EncoderKind, ModelConfig};
use crate::sparse::Selection;

/// Where the gradient penalty interpolates between real and generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpSpace {
    /// Between the encoded sequences `S_r` and `S_g`.
    #[default]
    Sparse,
    /// Between `H_r` and `H_g`; the interpolate is then encoded.
    Hidden,
}

impl std::str::FromStr for GpSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(GpSpace::Sparse),
            "hidden" => Ok(GpSpace::Hidden),
            other => Err(Error::Config(format!("unknown gp space {other:?}"))),
        }
    }
}

/// Every training hyperparameter. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Gradient-penalty weight.
    pub lambda: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_pretrain: f64,
    pub lr_adv: f64,
    pub batch: usize,
    pub max_len: usize,
    /// Pursuit rounds per state.
    pub sparse_iters: usize,
    pub selection: Selection,
    /// Generator updates in adversarial training.
    pub max_iters: u64,
    pub seed: u64,
    pub encoder_kind: EncoderKind,
    pub top_k: usize,
    pub delta: f64,
    /// Embedding and hidden width.
    pub hidden: usize,
    pub layers: usize,
    pub critic_channels: usize,
    pub critic_widths: Vec<usize>,
    /// Keep the shared embedding fixed during adversarial training.
    pub freeze_embeddings: bool,
    pub gp_space: GpSpace,
    pub dae_steps: u64,
    pub gen_steps: u64,
    /// Standard deviation of the latent `z`.
    pub z_std: f64,
    /// Checkpoint every this many generator updates (0 disables).
    pub checkpoint_every: u64,
    /// Stop adversarial training after this many seconds.
    pub wallclock_budget_secs: Option<f64>,
    /// Record elapsed time in the metrics log. Off makes logs byte-stable.
    pub log_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 10.0,
            n_critic: 5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_pretrain: 1e-3,
            lr_adv: 1e-4,
            batch: 64,
            max_len: 40,
            sparse_iters: 10,
            selection: Selection::InnerProduct,
            max_iters: 20_000,
            seed: 0,
            encoder_kind: EncoderKind::Sparse,
            top_k: 10,
            delta: 0.0,
            hidden: 300,
            layers: 2,
            critic_channels: 300,
            critic_widths: vec![5],
            freeze_embeddings: false,
            gp_space: GpSpace::Sparse,
            dae_steps: 2000,
            gen_steps: 2000,
            z_std: 1.0,
            checkpoint_every: 1000,
            wallclock_budget_secs: None,
            log_wallclock: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_pretrain > 0.0 && self.lr_adv > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.adam_eps > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("adam needs eps > 0 and betas in [0, 1)");
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.batch == 0 || self.sparse_iters == 0 || self.max_len < 2 {
            return bad("batch and sparse_iters must be positive and max_len at least 2");
        }
        if !(self.z_std > 0.0) {
            return bad("z_std must be positive");
        }
        if self.encoder_kind == EncoderKind::TopkStatic && self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        self.model(1).validate()
    }

    pub fn model(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d: self.hidden,
            layers: self.layers,
            critic_channels: self.critic_channels,
            critic_widths: self.critic_widths.clone(),
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder_kind,
            iterations: self.sparse_iters,
            selection: self.selection,
            top_k: self.top_k,
            delta: self.delta,
            freeze_atoms: self.freeze_embeddings,
        }
    }
}
