//! Teacher-forced pretraining of the auto-encoder and the generator.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::adam::Adam;
use super::config::TrainConfig;
use super::rng::{derive_rng, derive_seed, Phase};
use crate::corpus::{batch_at, Corpus};
use crate::diff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::nets::{corrupt, generator_stack, teacher_forced, words_of, Bound, Dae, Grads, ParamStore, Role, DAE, EMB, GEN};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PretrainReport {
    /// Mean batch loss at every step.
    pub losses: Vec<f64>,
    /// Mean token cross-entropy over the whole corpus after training.
    pub final_loss: f64,
    pub perplexity: f64,
    /// Teacher-forced arg-max accuracy over the whole corpus.
    pub accuracy: f64,
}

/// Target of a corpus sentence: its words followed by EOS.
pub fn target_of(corpus: &Corpus, i: usize) -> &[usize] {
    &corpus.sentence(i)[1..]
}

/// Latent vector `z ~ N(0, std²)` of width `d`.
pub fn sample_z(rng: &mut ChaCha8Rng, d: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::row((0..d).map(|_| normal.sample(rng)).collect())
}

struct SampleResult {
    grads: Grads,
    loss: f64,
    correct: usize,
    tokens: usize,
}

/// Runs `f` over `indices` in parallel and reduces in index order.
fn reduce<F>(indices: &[usize], f: F) -> Result<(Grads, f64, usize, usize)>
where
    F: Fn(usize, usize) -> Result<SampleResult> + Sync,
{
    let parts = indices
        .par_iter()
        .enumerate()
        .map(|(slot, &i)| f(slot, i))
        .collect::<Result<Vec<_>>>()?;
    let n = parts.len() as f64;
    let mut grads = Grads::sum_in_order(parts.iter().map(|p| &p.grads));
    grads.scale(1.0 / n);
    let loss = parts.iter().map(|p| p.loss).sum::<f64>() / n;
    let correct = parts.iter().map(|p| p.correct).sum();
    let tokens = parts.iter().map(|p| p.tokens).sum();
    Ok((grads, loss, correct, tokens))
}

pub(crate) fn ensure_finite(phase: &'static str, loss: f64, grads: &Grads) -> Result<()> {
    if loss.is_finite() && grads.all_finite() {
        return Ok(());
    }
    let grad_norms = grads.norms();
    log::error!("{phase}: non-finite loss {loss}; gradient norms {grad_norms:?}");
    Err(Error::NonFinite {
        phase,
        grad_norms,
    })
}

fn dae_role(trainable: bool) -> impl Fn(&str) -> Role {
    move |n: &str| {
        if n == EMB || n.starts_with(DAE) {
            if trainable {
                Role::Trainable
            } else {
                Role::Constant
            }
        } else {
            Role::Skip
        }
    }
}

fn dae_sample(store: &ParamStore, cfg: &TrainConfig, input: &[usize], target: &[usize], train: bool) -> Result<SampleResult> {
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, store, dae_role(train));
    let dae = Dae::from_bound(&g, &b, cfg.layers)?;
    let tf = dae.loss(&mut g, input, target)?;
    let loss = g.value(tf.loss).item();
    let grads = if train {
        g.backward(tf.loss)?;
        b.grads(&g)
    } else {
        Grads::default()
    };
    Ok(SampleResult {
        grads,
        loss,
        correct: tf.correct,
        tokens: tf.tokens,
    })
}

fn require_corpus(corpus: &Corpus) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Config("pretraining needs a non-empty corpus".into()));
    }
    Ok(())
}

fn all_indices(corpus: &Corpus) -> Vec<usize> {
    (0..corpus.len()).collect()
}

fn finish(losses: Vec<f64>, eval: (f64, f64)) -> PretrainReport {
    let (final_loss, accuracy) = eval;
    PretrainReport {
        losses,
        final_loss,
        perplexity: final_loss.exp(),
        accuracy,
    }
}

/// Mean token loss and accuracy of reconstructing every sentence from its
/// clean words.
pub fn dae_evaluate(store: &ParamStore, corpus: &Corpus, cfg: &TrainConfig) -> Result<(f64, f64)> {
    require_corpus(corpus)?;
    let (_, loss, correct, tokens) = reduce(&all_indices(corpus), |_, i| {
        let t = target_of(corpus, i);
        dae_sample(store, cfg, words_of(t), t, false)
    })?;
    Ok((loss, correct as f64 / tokens as f64))
}

/// Trains the auto-encoder (and the shared embedding) to rebuild clean
/// sentences from corrupted ones for `cfg.dae_steps` batches.
pub fn pretrain_dae(store: &mut ParamStore, corpus: &Corpus, cfg: &TrainConfig) -> Result<PretrainReport> {
    require_corpus(corpus)?;
    let mut opt = Adam::new(cfg.lr_pretrain, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let batch_seed = derive_seed(cfg.seed, Phase::DaeBatch, 0, 0);
    let mut losses = Vec::with_capacity(cfg.dae_steps as usize);
    for step in 0..cfg.dae_steps {
        let batch = batch_at(corpus, cfg.batch, batch_seed, step)?;
        let frozen: &ParamStore = store;
        let (grads, loss, _, _) = reduce(&batch.indices, |slot, i| {
            let target = target_of(corpus, i);
            let mut rng = derive_rng(cfg.seed, Phase::DaeNoise, step, slot as u64);
            let input = corrupt(words_of(target), &mut rng)?;
            dae_sample(frozen, cfg, &input, target, true)
        })?;
        ensure_finite("dae pretraining", loss, &grads)?;
        opt.step(store, &grads)?;
        if step % 100 == 0 {
            log::info!("dae step {step}: loss {loss:.4}");
        }
        losses.push(loss);
    }
    Ok(finish(losses, dae_evaluate(store, corpus, cfg)?))
}

fn gen_sample(store: &ParamStore, cfg: &TrainConfig, z: Tensor, target: &[usize], train: bool) -> Result<SampleResult> {
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, store, |n| {
        if n.starts_with(GEN) && train {
            Role::Trainable
        } else if n.starts_with(GEN) || n == EMB {
            Role::Constant
        } else {
            Role::Skip
        }
    });
    let stack = generator_stack(&g, &b, cfg.layers)?;
    let z = g.constant(z);
    let init = stack.init_state(&mut g, z);
    let tf = teacher_forced(&mut g, &stack, b.var(EMB)?, &init, target)?;
    let loss = g.value(tf.loss).item();
    let grads = if train {
        g.backward(tf.loss)?;
        b.grads(&g)
    } else {
        Grads::default()
    };
    Ok(SampleResult {
        grads,
        loss,
        correct: tf.correct,
        tokens: tf.tokens,
    })
}

/// Mean token loss and accuracy of the generator under teacher forcing,
/// each sentence with its own fixed latent draw.
pub fn generator_evaluate(store: &ParamStore, corpus: &Corpus, cfg: &TrainConfig) -> Result<(f64, f64)> {
    require_corpus(corpus)?;
    let (_, loss, correct, tokens) = reduce(&all_indices(corpus), |_, i| {
        let mut rng = derive_rng(cfg.seed, Phase::Eval, 0, i as u64);
        let z = sample_z(&mut rng, cfg.hidden, cfg.z_std);
        gen_sample(store, cfg, z, target_of(corpus, i), false)
    })?;
    Ok((loss, correct as f64 / tokens as f64))
}

/// Next-word maximum likelihood for `cfg.gen_steps` batches. The shared
/// embedding is left as the auto-encoder trained it.
pub fn pretrain_generator(store: &mut ParamStore, corpus: &Corpus, cfg: &TrainConfig) -> Result<PretrainReport> {
    require_corpus(corpus)?;
    let mut opt = Adam::new(cfg.lr_pretrain, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let batch_seed = derive_seed(cfg.seed, Phase::GenBatch, 0, 0);
    let mut losses = Vec::with_capacity(cfg.gen_steps as usize);
    for step in 0..cfg.gen_steps {
        let batch = batch_at(corpus, cfg.batch, batch_seed, step)?;
        let frozen: &ParamStore = store;
        let (grads, loss, _, _) = reduce(&batch.indices, |slot, i| {
            let mut rng = derive_rng(cfg.seed, Phase::GenNoise, step, slot as u64);
            let z = sample_z(&mut rng, cfg.hidden, cfg.z_std);
            gen_sample(frozen, cfg, z, target_of(corpus, i), true)
        })?;
        ensure_finite("generator pretraining", loss, &grads)?;
        opt.step(store, &grads)?;
        if step % 100 == 0 {
            log::info!("generator step {step}: loss {loss:.4}");
        }
        losses.push(loss);
    }
    Ok(finish(losses, generator_evaluate(store, corpus, cfg)?))
}

