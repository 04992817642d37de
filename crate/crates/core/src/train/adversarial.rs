//! The adversarial loop: several critic updates per generator update.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{GpSpace, TrainConfig};
use super::metrics::{MetricsLog, MetricsRecord};
use super::penalty::{gradient_penalty, gradient_penalty_hidden};
use super::pretrain::{ensure_finite, sample_z, target_of};
use super::rng::{derive_rng, derive_seed, Phase};
use crate::corpus::{batch_at, Corpus, PAD};
use crate::diff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::nets::{
    generate_sequence, generator_stack, Bound, Checkpoint, ConvCritic, Critic, Dae, Decode, EncoderConfig, Grads,
    GraphEncoder, ModelConfig, ParamStore, Role, CRITIC, DAE, EMB, GEN,
};

/// Atoms never selected by any encoder.
pub const EXCLUDED_ATOMS: [usize; 1] = [PAD];

/// One real/generated pair as seen by a critic update.
#[derive(Clone, Debug)]
pub struct SamplePair {
    pub s_r: Tensor,
    pub s_g: Tensor,
    pub h_r: Tensor,
    pub h_g: Tensor,
    /// Interpolation weight of the real side.
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticStats {
    pub loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub wasserstein: f64,
    pub penalty: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    kind: String,
    iter: u64,
    config: TrainConfig,
    model: ModelConfig,
    critic_t: u64,
    gen_t: u64,
    elapsed: f64,
    metrics: MetricsLog,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: ModelConfig,
    pub enc: EncoderConfig,
    pub store: ParamStore,
    pub critic_opt: Adam,
    pub gen_opt: Adam,
    /// Completed generator updates.
    pub iter: u64,
    pub log: MetricsLog,
    pub vocab: Vec<String>,
    elapsed_before: f64,
    started: Instant,
}

fn reduce_in_order<T: Send, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

impl Trainer {
    pub fn new(cfg: TrainConfig, vocab: Vec<String>, store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model(vocab.len());
        let emb = store.get(EMB)?;
        if emb.shape() != [model.vocab_size, model.d] {
            return Err(Error::dim("embedding table", emb.shape(), &[model.vocab_size, model.d]));
        }
        let adam = || Adam::new(cfg.lr_adv, cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(Trainer {
            enc: cfg.encoder(),
            critic_opt: adam(),
            gen_opt: adam(),
            model,
            store,
            iter: 0,
            log: MetricsLog::default(),
            vocab,
            elapsed_before: 0.0,
            started: Instant::now(),
            cfg,
        })
    }

    fn z(&self, rng: &mut ChaCha8Rng) -> Tensor {
        sample_z(rng, self.model.d, self.cfg.z_std)
    }

    /// Encoded real and generated sequences for one real target.
    pub fn make_pair(&self, target: &[usize], rng: &mut ChaCha8Rng) -> Result<SamplePair> {
        let z = self.z(rng);
        let eps: f64 = rng.random();
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, &self.store, |n| {
            if n == EMB || n.starts_with(GEN) || n.starts_with(DAE) {
                Role::Constant
            } else {
                Role::Skip
            }
        });
        let stack = generator_stack(&g, &b, self.model.layers)?;
        let mut enc = GraphEncoder::new(&self.enc, b.var(EMB)?, EXCLUDED_ATOMS.to_vec());
        let z = g.constant(z);
        let out = generate_sequence(&mut g, &stack, &mut enc, z, target.len(), Decode::Differentiable, None, false)?;
        let dae = Dae::from_bound(&g, &b, self.model.layers)?;
        let (h_r, s_r) = dae.reconstruct(&mut g, &mut enc, target)?;
        Ok(SamplePair {
            s_r: g.value(s_r).clone(),
            s_g: g.value(out.s).clone(),
            h_r: g.value(h_r).clone(),
            h_g: g.value(out.h).clone(),
            eps,
        })
    }

    /// Pairs for critic update `j` of the current iteration.
    pub fn critic_pairs(&self, corpus: &Corpus, j: usize) -> Result<Vec<SamplePair>> {
        let step = self.iter * self.cfg.n_critic as u64 + j as u64;
        let batch = batch_at(corpus, self.cfg.batch, derive_seed(self.cfg.seed, Phase::CriticBatch, 0, 0), step)?;
        reduce_in_order(batch.len(), |slot| {
            let mut rng = derive_rng(self.cfg.seed, Phase::CriticNoise, step, slot as u64);
            self.make_pair(target_of(corpus, batch.indices[slot]), &mut rng)
        })
    }

    /// Critic loss `mean D(S_g) − mean D(S_r) + mean penalty` on `pairs` and
    /// its gradient with respect to the critic parameters.
    pub fn critic_loss_on(&self, pairs: &[SamplePair]) -> Result<(CriticStats, Grads)> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("critic batch"));
        }
        let parts = reduce_in_order(pairs.len(), |i| {
            let p = &pairs[i];
            if p.s_r.shape() != p.s_g.shape() {
                return Err(Error::dim("critic pair", p.s_r.shape(), p.s_g.shape()));
            }
            let mut g = Graph::new();
            let b = Bound::bind(&mut g, &self.store, |n| if n.starts_with(CRITIC) { Role::Trainable } else { Role::Skip });
            let critic = ConvCritic::from_bound(&g, &b, &self.model.critic_widths)?;
            let sg = g.constant(p.s_g.clone());
            let sr = g.constant(p.s_r.clone());
            let d_fake = critic.score(&mut g, sg)?;
            let d_real = critic.score(&mut g, sr)?;
            let gap = g.sub(d_fake, d_real)?;
            let pen = match self.cfg.gp_space {
                GpSpace::Sparse => gradient_penalty(&mut g, &critic, &p.s_r, &p.s_g, p.eps, self.cfg.lambda)?,
                GpSpace::Hidden => gradient_penalty_hidden(
                    &mut g,
                    &critic,
                    &p.h_r,
                    &p.h_g,
                    p.eps,
                    self.cfg.lambda,
                    self.store.get(EMB)?,
                    &self.enc,
                    &EXCLUDED_ATOMS,
                )?,
            };
            let loss = g.add(gap, pen)?;
            g.backward(loss)?;
            let vals = [g.value(d_real).item(), g.value(d_fake).item(), g.value(pen).item()];
            Ok((vals, b.grads(&g)))
        })?;
        let n = pairs.len() as f64;
        let mean = |k: usize| parts.iter().map(|(v, _)| v[k]).sum::<f64>() / n;
        let (d_real, d_fake, penalty) = (mean(0), mean(1), mean(2));
        let mut grads = Grads::sum_in_order(parts.iter().map(|(_, g)| g));
        grads.scale(1.0 / n);
        let stats = CriticStats {
            loss: d_fake - d_real + penalty,
            d_real,
            d_fake,
            wasserstein: d_real - d_fake,
            penalty,
            grad_norm: grads.global_norm(),
        };
        Ok((stats, grads))
    }

    /// One Adam step on the critic from the given pairs.
    pub fn critic_step_on(&mut self, pairs: &[SamplePair]) -> Result<CriticStats> {
        let (stats, grads) = self.critic_loss_on(pairs)?;
        ensure_finite("critic", stats.loss, &grads)?;
        self.critic_opt.step(&mut self.store, &grads)?;
        Ok(stats)
    }

    pub fn critic_iteration(&mut self, corpus: &Corpus, j: usize) -> Result<CriticStats> {
        let pairs = self.critic_pairs(corpus, j)?;
        self.critic_step_on(&pairs)
    }

    fn gen_role(&self) -> impl Fn(&str) -> Role + '_ {
        move |n: &str| {
            if n.starts_with(GEN) || (n == EMB && !self.cfg.freeze_embeddings) {
                Role::Trainable
            } else if n == EMB || n.starts_with(CRITIC) {
                Role::Constant
            } else {
                Role::Skip
            }
        }
    }

    /// `−mean D(S_g)` for the given latents and lengths, with its gradient
    /// for the generator (and the embedding unless frozen).
    pub fn generator_loss_on(&self, latents: &[(Tensor, usize)]) -> Result<(GenStats, Grads)> {
        if latents.is_empty() {
            return Err(Error::EmptyInput("generator batch"));
        }
        let parts = reduce_in_order(latents.len(), |i| {
            let (z, len) = &latents[i];
            let mut g = Graph::new();
            let b = Bound::bind(&mut g, &self.store, self.gen_role());
            let stack = generator_stack(&g, &b, self.model.layers)?;
            let mut enc = GraphEncoder::new(&self.enc, b.var(EMB)?, EXCLUDED_ATOMS.to_vec());
            let z = g.constant(z.clone());
            let out = generate_sequence(&mut g, &stack, &mut enc, z, *len, Decode::Differentiable, None, false)?;
            let critic = ConvCritic::from_bound(&g, &b, &self.model.critic_widths)?;
            let d = critic.score(&mut g, out.s)?;
            let loss = g.scale(d, -1.0);
            g.backward(loss)?;
            Ok((g.value(loss).item(), b.grads(&g)))
        })?;
        let n = latents.len() as f64;
        let loss = parts.iter().map(|(l, _)| l).sum::<f64>() / n;
        let mut grads = Grads::sum_in_order(parts.iter().map(|(_, g)| g));
        grads.scale(1.0 / n);
        Ok((
            GenStats {
                loss,
                grad_norm: grads.global_norm(),
            },
            grads,
        ))
    }

    /// Latents and lengths for the current generator update; lengths follow
    /// a batch of real sentences.
    pub fn generator_latents(&self, corpus: &Corpus) -> Result<Vec<(Tensor, usize)>> {
        let batch = batch_at(corpus, self.cfg.batch, derive_seed(self.cfg.seed, Phase::AdvGenBatch, 0, 0), self.iter)?;
        Ok((0..batch.len())
            .map(|slot| {
                let mut rng = derive_rng(self.cfg.seed, Phase::AdvGenNoise, self.iter, slot as u64);
                (self.z(&mut rng), target_of(corpus, batch.indices[slot]).len())
            })
            .collect())
    }

    pub fn generator_step_on(&mut self, latents: &[(Tensor, usize)]) -> Result<GenStats> {
        let (stats, grads) = self.generator_loss_on(latents)?;
        ensure_finite("generator", stats.loss, &grads)?;
        self.gen_opt.step(&mut self.store, &grads)?;
        Ok(stats)
    }

    pub fn generator_iteration(&mut self, corpus: &Corpus) -> Result<GenStats> {
        let latents = self.generator_latents(corpus)?;
        self.generator_step_on(&latents)
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed_before + self.started.elapsed().as_secs_f64()
    }

    /// `n_critic` critic updates then one generator update; appends a record.
    pub fn step(&mut self, corpus: &Corpus) -> Result<&MetricsRecord> {
        let n = self.cfg.n_critic;
        let mut acc = CriticStats::default();
        let mut norm_sum = 0.0;
        for j in 0..n {
            let s = self.critic_iteration(corpus, j)?;
            acc.loss += s.loss / n as f64;
            acc.wasserstein += s.wasserstein / n as f64;
            acc.penalty += s.penalty / n as f64;
            norm_sum += s.grad_norm;
        }
        let gs = self.generator_iteration(corpus)?;
        norm_sum += gs.grad_norm;
        self.iter += 1;
        let record = MetricsRecord {
            iter: self.iter,
            critic_loss: acc.loss,
            gen_loss: gs.loss,
            wasserstein_estimate: acc.wasserstein,
            penalty: acc.penalty,
            grad_norm_mean: norm_sum / (n + 1) as f64,
            wallclock: self.cfg.log_wallclock.then(|| self.elapsed()),
        };
        self.log.push(record)?;
        Ok(self.log.records.last().expect("just pushed"))
    }

    pub fn checkpoint_path(dir: &Path, iter: u64) -> PathBuf {
        dir.join(format!("ckpt_{iter:06}.bin"))
    }

    /// Trains until `until` generator updates are done (or the wallclock
    /// budget runs out). With `dir`, writes a checkpoint at the start,
    /// every `checkpoint_every` updates and at the end.
    pub fn run(&mut self, corpus: &Corpus, until: u64, dir: Option<&Path>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut save = |t: &Trainer| -> Result<()> {
            if let Some(dir) = dir {
                let p = Trainer::checkpoint_path(dir, t.iter);
                t.to_checkpoint()?.save(&p)?;
                written.push(p);
            }
            Ok(())
        };
        save(self)?;
        while self.iter < until {
            if let Some(budget) = self.cfg.wallclock_budget_secs {
                if self.elapsed() >= budget {
                    log::warn!("wallclock budget of {budget}s reached at iteration {}", self.iter);
                    break;
                }
            }
            let r = self.step(corpus)?;
            log::info!(
                "iter {}: critic {:.4} gen {:.4} W {:.4} gp {:.4}",
                r.iter,
                r.critic_loss,
                r.gen_loss,
                r.wasserstein_estimate,
                r.penalty
            );
            let every = self.cfg.checkpoint_every;
            if every > 0 && self.iter.is_multiple_of(every) && self.iter < until {
                save(self)?;
            }
        }
        if self.iter > 0 {
            save(self)?;
        }
        Ok(written)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors = self.store.clone();
        self.critic_opt.export("adam.critic.", &mut tensors);
        self.gen_opt.export("adam.gen.", &mut tensors);
        let meta = TrainerMeta {
            kind: "adversarial".into(),
            iter: self.iter,
            config: self.cfg.clone(),
            model: self.model.clone(),
            critic_t: self.critic_opt.t,
            gen_t: self.gen_opt.t,
            // Left out unless wallclock logging is on, so checkpoints of equal
            // runs are byte-identical. The budget then restarts on resume.
            elapsed: if self.cfg.log_wallclock { self.elapsed() } else { 0.0 },
            metrics: self.log.clone(),
        };
        Ok(Checkpoint {
            vocab: self.vocab.clone(),
            meta: serde_json::to_value(meta)?,
            tensors,
        })
    }

    /// Restores a trainer from [`Trainer::to_checkpoint`] output. With
    /// `cfg`, the stored configuration is replaced (the model shape must
    /// match).
    pub fn from_checkpoint(ckpt: Checkpoint, cfg: Option<TrainConfig>) -> Result<Self> {
        let meta: TrainerMeta = serde_json::from_value(ckpt.meta)
            .map_err(|e| Error::Checkpoint(format!("not a training checkpoint: {e}")))?;
        let cfg = cfg.unwrap_or(meta.config);
        let mut tensors = ckpt.tensors;
        let mut critic_opt = Adam::new(cfg.lr_adv, cfg.beta1, cfg.beta2, cfg.adam_eps);
        critic_opt.import("adam.critic.", meta.critic_t, &mut tensors);
        let mut gen_opt = Adam::new(cfg.lr_adv, cfg.beta1, cfg.beta2, cfg.adam_eps);
        gen_opt.import("adam.gen.", meta.gen_t, &mut tensors);
        let mut t = Trainer::new(cfg, ckpt.vocab, tensors)?;
        if t.model != meta.model {
            return Err(Error::Checkpoint("configuration does not match the stored model shape".into()));
        }
        t.critic_opt = critic_opt;
        t.gen_opt = gen_opt;
        t.iter = meta.iter;
        t.log = meta.metrics;
        t.elapsed_before = meta.elapsed;
        Ok(t)
    }
}
