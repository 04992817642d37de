//! Training configuration from defaults, a TOML file and flags, in that
//! order of precedence (flags win).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::{Map, Value};
use sparsegan::train::TrainConfig;

/// `"<text> [default: <value>]"` with the value read off
/// `TrainConfig::default()`, so help and code cannot drift apart.
pub fn dflt(key: &str, text: &str) -> String {
    let cfg = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    format!("{text} [default: {}]", render(&cfg[key]))
}

pub fn render(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// One optional flag per `TrainConfig` field; key names in a config file
/// are the field names.
#[derive(Args, Clone, Debug, Default, Serialize)]
pub struct TrainFlags {
    #[arg(long, help = dflt("lambda", "Gradient-penalty weight"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long, help = dflt("n_critic", "Critic updates per generator update"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_critic: Option<usize>,
    #[arg(long, help = dflt("beta1", "Adam beta1"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long, help = dflt("beta2", "Adam beta2"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long, help = dflt("adam_eps", "Adam epsilon"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[arg(long, help = dflt("lr_pretrain", "Learning rate of both pretraining stages"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_pretrain: Option<f64>,
    #[arg(long, help = dflt("lr_adv", "Learning rate of adversarial training"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_adv: Option<f64>,
    #[arg(long, help = dflt("batch", "Sentences per batch"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[arg(long, help = dflt("max_len", "Longest sentence in tokens, BOS and EOS included"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[arg(long, help = dflt("sparse_iters", "Pursuit rounds per state (L)"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_iters: Option<usize>,
    #[arg(long, value_parser = ["inner_product", "abs_inner_product"], help = dflt("selection", "Atom selection rule"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
    #[arg(long, help = dflt("max_iters", "Generator updates of adversarial training"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u64>,
    #[arg(long = "encoder", alias = "encoder-kind", value_parser = ["sparse", "topk-static", "topk-dynamic", "none"], help = dflt("encoder_kind", "What turns states into critic inputs"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder_kind: Option<String>,
    #[arg(long, help = dflt("top_k", "K of the static top-k encoder"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[arg(long, allow_negative_numbers = true, help = dflt("delta", "Logit threshold of the dynamic top-k encoder"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long, help = dflt("hidden", "Embedding and hidden width"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[arg(long, help = dflt("layers", "LSTM layers"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[arg(long, help = dflt("critic_channels", "Critic filters per width"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_channels: Option<usize>,
    #[arg(long, value_delimiter = ',', help = dflt("critic_widths", "Critic filter widths, comma separated"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_widths: Option<Vec<usize>>,
    #[arg(long, help = dflt("freeze_embeddings", "Keep embeddings fixed in adversarial training"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_embeddings: Option<bool>,
    #[arg(long, value_parser = ["sparse", "hidden"], help = dflt("gp_space", "Where the gradient penalty interpolates"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gp_space: Option<String>,
    #[arg(long, help = dflt("dae_steps", "Auto-encoder pretraining steps"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dae_steps: Option<u64>,
    #[arg(long, help = dflt("gen_steps", "Generator pretraining steps"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_steps: Option<u64>,
    #[arg(long, help = dflt("z_std", "Standard deviation of the latent"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_std: Option<f64>,
    #[arg(long, help = dflt("checkpoint_every", "Checkpoint interval in generator updates, 0 for start and end only"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    #[arg(long, help = dflt("wallclock_budget_secs", "Stop adversarial training after this many seconds"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wallclock_budget_secs: Option<f64>,
    #[arg(long, help = dflt("log_wallclock", "Record elapsed time in metrics and checkpoints"))]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_wallclock: Option<bool>,
}

fn merge(into: &mut Map<String, Value>, from: Map<String, Value>) {
    for (k, v) in from {
        into.insert(k, v);
    }
}

fn read_toml(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    match serde_json::to_value(table)? {
        Value::Object(m) => Ok(m),
        _ => bail!("config {} is not a table", path.display()),
    }
}

/// `base`, overlaid with the config file, then the flags, then `seed`.
pub fn resolve(base: &TrainConfig, file: Option<&Path>, flags: &TrainFlags, seed: Option<u64>) -> Result<TrainConfig> {
    let Value::Object(mut m) = serde_json::to_value(base)? else {
        unreachable!("config is a struct")
    };
    if let Some(path) = file {
        merge(&mut m, read_toml(path)?);
    }
    let Value::Object(mut f) = serde_json::to_value(flags)? else {
        unreachable!("flags are a struct")
    };
    for key in ["encoder_kind", "gp_space"] {
        if let Some(Value::String(s)) = f.get_mut(key) {
            *s = s.replace('-', "_");
        }
    }
    merge(&mut m, f);
    if let Some(seed) = seed {
        m.insert("seed".into(), seed.into());
    }
    let cfg: TrainConfig = serde_json::from_value(Value::Object(m)).context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}
