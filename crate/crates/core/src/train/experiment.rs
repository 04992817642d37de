//! Desk-scale experiment on the synthetic grammar: pretrain, measure,
//! train adversarially, measure again.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adversarial::Trainer;
use super::config::TrainConfig;
use super::generate::generate_ids;
use super::pretrain::{pretrain_dae, pretrain_generator, PretrainReport};
use crate::corpus::{membership_rate, random_embeddings, synth_grammar, Corpus, Grammar, Vocab};
use crate::error::{Error, Result};
use crate::eval::{bleu_n, self_bleu, split_tokens};
use crate::nets::{init_model, Decode, EncoderKind, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_train: usize,
    pub n_heldout: usize,
    pub n_generate: usize,
    /// Seed of the generated evaluation samples.
    pub eval_seed: u64,
    pub emb_std: f64,
    pub train: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_train: 500,
            n_heldout: 200,
            n_generate: 200,
            eval_seed: 7,
            emb_std: 1.0,
            train: TrainConfig {
                hidden: 32,
                critic_channels: 32,
                sparse_iters: 4,
                batch: 16,
                n_critic: 5,
                max_iters: 200,
                max_len: 16,
                lr_pretrain: 3e-3,
                dae_steps: 3000,
                gen_steps: 1500,
                checkpoint_every: 0,
                ..TrainConfig::default()
            },
        }
    }
}

pub struct ToyData {
    pub vocab: Vocab,
    pub train: Corpus,
    pub heldout: Vec<String>,
    pub grammar: Grammar,
}

pub fn prepare_toy(cfg: &ToyConfig) -> Result<ToyData> {
    if cfg.n_train == 0 || cfg.n_heldout == 0 {
        return Err(Error::Config("toy experiment needs training and held-out sentences".into()));
    }
    let data = synth_grammar(cfg.train.seed, cfg.n_train + cfg.n_heldout)?;
    let (train, heldout) = data.sentences.split_at(cfg.n_train);
    let vocab = Vocab::build(train.iter().map(String::as_str), 1)?;
    let corpus = Corpus::from_lines(train.iter().map(String::as_str), &vocab, cfg.train.max_len)?;
    Ok(ToyData {
        vocab,
        train: corpus,
        heldout: heldout.to_vec(),
        grammar: data.grammar,
    })
}

/// Quality of generated text against held-out references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub bleu2: f64,
    pub self_bleu2: f64,
    pub grammar_rate: f64,
    pub mean_len: f64,
    pub n_generated: usize,
    pub samples: Vec<String>,
}

pub fn evaluate(store: &ParamStore, data: &ToyData, cfg: &ToyConfig) -> Result<EvalSnapshot> {
    let t = &cfg.train;
    let ids = generate_ids(
        store,
        &t.model(data.vocab.len()),
        &t.encoder(),
        cfg.n_generate,
        t.max_len,
        cfg.eval_seed,
        t.z_std,
        Decode::Sample,
    )?;
    let texts: Vec<String> = ids.iter().map(|s| data.vocab.decode(s)).collect();
    let cand = split_tokens(&texts);
    let refs = split_tokens(&data.heldout);
    let self_b = if cand.len() >= 2 { self_bleu(&cand, 2)?.score } else { f64::NAN };
    Ok(EvalSnapshot {
        bleu2: bleu_n(&cand, &refs, 2)?.score,
        self_bleu2: self_b,
        grammar_rate: membership_rate(&data.grammar, &texts),
        mean_len: cand.iter().map(Vec::len).sum::<usize>() as f64 / cand.len().max(1) as f64,
        n_generated: texts.len(),
        samples: texts.into_iter().take(10).collect(),
    })
}

pub struct Pretrained {
    pub store: ParamStore,
    pub dae: PretrainReport,
    pub generator: PretrainReport,
}

pub fn pretrain_toy(data: &ToyData, cfg: &ToyConfig) -> Result<Pretrained> {
    let t = &cfg.train;
    let emb = random_embeddings(data.vocab.len(), t.hidden, cfg.emb_std, t.seed);
    let mut store = init_model(&t.model(data.vocab.len()), emb, t.seed)?;
    let dae = pretrain_dae(&mut store, &data.train, t)?;
    let generator = pretrain_generator(&mut store, &data.train, t)?;
    Ok(Pretrained { store, dae, generator })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    pub encoder: EncoderKind,
    pub iterations: u64,
    pub all_finite: bool,
    pub final_critic_loss: Option<f64>,
    pub final_wasserstein: Option<f64>,
    pub snapshot: EvalSnapshot,
    pub seconds: f64,
}

pub fn adversarial_toy(
    pretrained: &ParamStore,
    data: &ToyData,
    cfg: &ToyConfig,
    encoder: EncoderKind,
) -> Result<(AdversarialResult, Trainer)> {
    let start = Instant::now();
    let mut t = cfg.train.clone();
    t.encoder_kind = encoder;
    let mut trainer = Trainer::new(t.clone(), data.vocab.words().to_vec(), pretrained.clone())?;
    trainer.run(&data.train, t.max_iters, None)?;
    let run_cfg = ToyConfig {
        train: t,
        ..cfg.clone()
    };
    let snapshot = evaluate(&trainer.store, data, &run_cfg)?;
    let last = trainer.log.records.last();
    let result = AdversarialResult {
        encoder,
        iterations: trainer.iter,
        all_finite: trainer.log.all_finite() && trainer.store.all_finite(),
        final_critic_loss: last.map(|r| r.critic_loss),
        final_wasserstein: last.map(|r| r.wasserstein_estimate),
        snapshot,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, trainer))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub dae_accuracy: f64,
    pub dae_perplexity: f64,
    pub generator_accuracy: f64,
    pub generator_perplexity: f64,
}

impl PretrainSummary {
    pub fn of(p: &Pretrained) -> Self {
        PretrainSummary {
            dae_accuracy: p.dae.accuracy,
            dae_perplexity: p.dae.perplexity,
            generator_accuracy: p.generator.accuracy,
            generator_perplexity: p.generator.perplexity,
        }
    }
}

/// The same pretrained start point trained with each encoder in turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: ToyConfig,
    pub vocab_size: usize,
    pub pretrain: PretrainSummary,
    pub baseline: EvalSnapshot,
    pub runs: Vec<AdversarialResult>,
}

pub fn ablate(cfg: &ToyConfig, encoders: &[EncoderKind]) -> Result<AblationReport> {
    let data = prepare_toy(cfg)?;
    let pre = pretrain_toy(&data, cfg)?;
    ablate_from(&pre, &data, cfg, encoders)
}

/// [`ablate`] from an existing pretrained start point.
pub fn ablate_from(pre: &Pretrained, data: &ToyData, cfg: &ToyConfig, encoders: &[EncoderKind]) -> Result<AblationReport> {
    let baseline = evaluate(&pre.store, data, cfg)?;
    let runs = encoders
        .iter()
        .map(|&e| Ok(adversarial_toy(&pre.store, data, cfg, e)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        config: cfg.clone(),
        vocab_size: data.vocab.len(),
        pretrain: PretrainSummary::of(pre),
        baseline,
        runs,
    })
}
