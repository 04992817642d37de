use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use serde_json::{json, Value};
use sparsegan::corpus::{load_embeddings, random_embeddings, read_sentences, synth_grammar, Corpus, Vocab};
use sparsegan::eval::{bleu_n, self_bleu, split_tokens};
use sparsegan::nets::{init_model, Checkpoint, Decode, EncoderKind, ModelConfig};
use sparsegan::sparse::to_json_lines;
use sparsegan::train::{
    ablate, encode_sentence, generate_ids, pretrain_dae, pretrain_generator, PretrainReport, ToyConfig, TrainConfig,
    Trainer,
};

use crate::config::resolve;
use crate::manifest::{hash_file, InputFile, RunDir, RunManifest};
use crate::{
    AblateArgs, Cmd, DecodeArg, EncodeArgs, EvalArgs, GenerateArgs, PretrainDaeArgs, PretrainGenArgs, SynthArgs,
    TrainArgs,
};

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::SynthData(a) => synth_data(a),
        Cmd::PretrainDae(a) => pretrain_dae_cmd(a),
        Cmd::PretrainGen(a) => pretrain_gen_cmd(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Generate(a) => generate_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Encode(a) => encode_cmd(a),
        Cmd::Ablate(a) => ablate_cmd(a),
    }
}

fn join_lines<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().map(|s| format!("{}\n", s.as_ref())).collect()
}

fn synth_data(a: SynthArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let data = synth_grammar(a.seed, a.n + a.heldout)?;
    let (train, heldout) = data.sentences.split_at(a.n);
    let mut run = RunDir::create(&a.out)?;
    run.write("train.txt", join_lines(train).as_bytes())?;
    if !heldout.is_empty() {
        run.write("heldout.txt", join_lines(heldout).as_bytes())?;
    }
    run.write_json("grammar.json", &data.grammar)?;
    info!("wrote {} training and {} held-out sentences", train.len(), heldout.len());
    let config = json!({"n": a.n, "heldout": a.heldout});
    run.finish(RunManifest::new("synth-data", Some(a.seed), config, vec![]))
}

/// Checkpoint written by the pretraining commands.
fn pretrain_checkpoint(stage: &str, vocab: &Vocab, cfg: &TrainConfig, report: &PretrainReport, store: sparsegan::nets::ParamStore) -> Checkpoint {
    Checkpoint {
        vocab: vocab.words().to_vec(),
        meta: json!({
            "kind": "pretrain",
            "stage": stage,
            "config": cfg,
            "model": cfg.model(vocab.len()),
            "final_loss": report.final_loss,
            "perplexity": report.perplexity,
            "accuracy": report.accuracy,
        }),
        tensors: store,
    }
}

fn report_json(report: &PretrainReport) -> Value {
    json!({
        "final_loss": report.final_loss,
        "perplexity": report.perplexity,
        "accuracy": report.accuracy,
        "losses": report.losses,
    })
}

/// A checkpoint plus the configuration it was trained with.
struct Loaded {
    ckpt: Checkpoint,
    cfg: TrainConfig,
    vocab: Vocab,
    input: InputFile,
}

fn load_checkpoint(role: &str, path: &Path) -> Result<Loaded> {
    let input = hash_file(role, path)?;
    let ckpt = Checkpoint::load(path)?;
    let cfg: TrainConfig = serde_json::from_value(ckpt.meta["config"].clone())
        .with_context(|| format!("{}: no usable configuration in checkpoint", path.display()))?;
    let vocab = Vocab::from_id_list(ckpt.vocab.clone())?;
    Ok(Loaded { ckpt, cfg, vocab, input })
}

/// Model-shape settings cannot change once parameters exist.
fn check_shape(loaded: &Loaded, cfg: &TrainConfig) -> Result<ModelConfig> {
    let model = cfg.model(loaded.vocab.len());
    let stored: ModelConfig = serde_json::from_value(loaded.ckpt.meta["model"].clone())
        .context("checkpoint has no model description")?;
    if model != stored {
        bail!("hidden, layers, critic_channels and critic_widths must match the checkpoint ({stored:?})");
    }
    Ok(model)
}

fn read_corpus(path: &Path, vocab: &Vocab, max_len: usize) -> Result<(Corpus, InputFile)> {
    let input = hash_file("corpus", path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((Corpus::from_lines(text.lines(), vocab, max_len)?, input))
}

fn config_input(file: Option<&Path>) -> Result<Vec<InputFile>> {
    file.map(|p| hash_file("config", p)).into_iter().collect()
}

fn pretrain_dae_cmd(a: PretrainDaeArgs) -> Result<()> {
    let cfg = resolve(&TrainConfig::default(), a.common.config.as_deref(), &a.train, a.seed)?;
    let mut inputs = vec![hash_file("corpus", &a.corpus)?];
    inputs.extend(config_input(a.common.config.as_deref())?);
    let text = fs::read_to_string(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let vocab = Vocab::build(text.lines(), a.min_count)?;
    let corpus = Corpus::from_lines(text.lines(), &vocab, cfg.max_len)?;
    info!("vocabulary of {} words, {} sentences", vocab.len(), corpus.len());

    let mut run = RunDir::create(&a.common.out)?;
    let emb = match &a.embeddings {
        Some(path) => {
            inputs.push(hash_file("embeddings", path)?);
            let init = load_embeddings(path, &vocab, cfg.hidden, cfg.seed)?;
            info!("{} vocabulary words had no vector", init.oov.len());
            run.write("oov.txt", join_lines(&init.oov).as_bytes())?;
            init.table
        }
        None => {
            if !(a.emb_std > 0.0) {
                bail!("--emb-std must be positive");
            }
            random_embeddings(vocab.len(), cfg.hidden, a.emb_std, cfg.seed)
        }
    };
    let mut store = init_model(&cfg.model(vocab.len()), emb, cfg.seed)?;
    let report = pretrain_dae(&mut store, &corpus, &cfg)?;
    info!("dae: loss {:.4} accuracy {:.3}", report.final_loss, report.accuracy);
    pretrain_checkpoint("dae", &vocab, &cfg, &report, store).save(&run.output("dae.ckpt"))?;
    run.write_json("dae_report.json", &report_json(&report))?;
    let config = json!({"train": cfg, "emb_std": a.emb_std, "min_count": a.min_count});
    run.finish(RunManifest::new("pretrain-dae", Some(cfg.seed), config, inputs))
}

fn pretrain_gen_cmd(a: PretrainGenArgs) -> Result<()> {
    let loaded = load_checkpoint("init", &a.init)?;
    let cfg = resolve(&loaded.cfg, a.common.config.as_deref(), &a.train, a.seed)?;
    check_shape(&loaded, &cfg)?;
    let (corpus, corpus_in) = read_corpus(&a.corpus, &loaded.vocab, cfg.max_len)?;
    let mut inputs = vec![corpus_in, loaded.input.clone()];
    inputs.extend(config_input(a.common.config.as_deref())?);

    let mut run = RunDir::create(&a.common.out)?;
    let mut store = loaded.ckpt.tensors.clone();
    let report = pretrain_generator(&mut store, &corpus, &cfg)?;
    info!("generator: loss {:.4} accuracy {:.3}", report.final_loss, report.accuracy);
    pretrain_checkpoint("generator", &loaded.vocab, &cfg, &report, store).save(&run.output("gen.ckpt"))?;
    run.write_json("gen_report.json", &report_json(&report))?;
    run.finish(RunManifest::new("pretrain-gen", Some(cfg.seed), json!({"train": cfg}), inputs))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let loaded = load_checkpoint("init", &a.init)?;
    let cfg = resolve(&loaded.cfg, a.common.config.as_deref(), &a.train, Some(a.seed))?;
    check_shape(&loaded, &cfg)?;
    let (corpus, corpus_in) = read_corpus(&a.corpus, &loaded.vocab, cfg.max_len)?;
    let mut inputs = vec![corpus_in, loaded.input.clone()];
    inputs.extend(config_input(a.common.config.as_deref())?);

    let resume = loaded.ckpt.meta["kind"] == "adversarial";
    let mut trainer = if resume {
        Trainer::from_checkpoint(loaded.ckpt, Some(cfg.clone()))?
    } else {
        Trainer::new(cfg.clone(), loaded.ckpt.vocab, loaded.ckpt.tensors)?
    };
    if resume {
        info!("resuming at iteration {}", trainer.iter);
    }

    let mut run = RunDir::create(&a.common.out)?;
    let dir = run.output("checkpoints");
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir)?;
    trainer.run(&corpus, cfg.max_iters, Some(&dir))?;
    run.expand_dir("checkpoints")?;
    trainer.log.write(&run.output("metrics.jsonl"))?;
    info!(
        "trained to iteration {}; final checkpoint {}",
        trainer.iter,
        Trainer::checkpoint_path(&dir, trainer.iter).display()
    );
    run.finish(RunManifest::new("train", Some(a.seed), json!({"train": cfg}), inputs))
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let loaded = load_checkpoint("checkpoint", &a.checkpoint)?;
    let cfg = resolve(&loaded.cfg, a.common.config.as_deref(), &a.train, Some(a.seed))?;
    let model = check_shape(&loaded, &cfg)?;
    let mut inputs = vec![loaded.input.clone()];
    inputs.extend(config_input(a.common.config.as_deref())?);
    let decode = match a.decode {
        DecodeArg::Sample => Decode::Sample,
        DecodeArg::Greedy => Decode::Greedy,
    };

    let mut run = RunDir::create(&a.common.out)?;
    let ids = generate_ids(&loaded.ckpt.tensors, &model, &cfg.encoder(), a.n, cfg.max_len, a.seed, cfg.z_std, decode)?;
    let texts: Vec<String> = ids.iter().map(|s| loaded.vocab.decode(s)).collect();
    run.write("samples.txt", join_lines(&texts).as_bytes())?;
    let config = json!({"train": cfg, "n": a.n, "decode": format!("{:?}", a.decode).to_lowercase()});
    run.finish(RunManifest::new("generate", Some(a.seed), config, inputs))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    if a.orders.contains(&0) {
        bail!("BLEU orders must be at least 1");
    }
    let inputs = vec![hash_file("candidates", &a.candidates)?, hash_file("references", &a.references)?];
    // Empty candidate lines are kept so that they count as skipped.
    let cand_text = fs::read_to_string(&a.candidates).with_context(|| format!("reading {}", a.candidates.display()))?;
    let cand = split_tokens(&cand_text.lines().collect::<Vec<_>>());
    let refs = split_tokens(&read_sentences(&a.references)?);

    let mut bleu = BTreeMap::new();
    let mut self_b = BTreeMap::new();
    let mut skipped = 0;
    for &n in &a.orders {
        let b = bleu_n(&cand, &refs, n)?;
        skipped = b.skipped_empty;
        bleu.insert(n.to_string(), b.score);
        let s = if cand.len() - skipped >= 2 { Some(self_bleu(&cand, n)?.score) } else { None };
        self_b.insert(n.to_string(), s);
    }
    let report = json!({
        "bleu": bleu,
        "self_bleu": self_b,
        "n_candidates": cand.len(),
        "n_references": refs.len(),
        "skipped_empty": skipped,
    });
    let mut run = RunDir::create(&a.out)?;
    run.write_json("eval.json", &report)?;
    info!("{report}");
    run.finish(RunManifest::new("eval", None, json!({"orders": a.orders}), inputs))
}

fn encode_cmd(a: EncodeArgs) -> Result<()> {
    let loaded = load_checkpoint("checkpoint", &a.checkpoint)?;
    let cfg = resolve(&loaded.cfg, a.common.config.as_deref(), &a.train, None)?;
    let model = check_shape(&loaded, &cfg)?;
    let mut inputs = vec![loaded.input.clone()];
    inputs.extend(config_input(a.common.config.as_deref())?);
    let words = loaded.vocab.encode(&a.sentence);
    if words.is_empty() {
        bail!("--sentence has no words");
    }

    let mut run = RunDir::create(&a.common.out)?;
    let codes = encode_sentence(&loaded.ckpt.tensors, &model, &cfg.encoder(), &words)?;
    run.write("codes.jsonl", to_json_lines(&codes)?.as_bytes())?;
    let config = json!({"train": cfg, "sentence": a.sentence});
    run.finish(RunManifest::new("encode", None, config, inputs))
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<ToyConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ToyConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = a.max_iters {
        cfg.train.max_iters = m;
    }
    cfg.train.validate()?;
    let encoders = a
        .encoders
        .iter()
        .map(|e| e.replace('-', "_").parse::<EncoderKind>())
        .collect::<sparsegan::Result<Vec<_>>>()?;
    let inputs = config_input(a.config.as_deref())?;

    let mut run = RunDir::create(&a.out)?;
    let report = ablate(&cfg, &encoders)?;
    run.write_json("ablation.json", &report)?;
    run.finish(RunManifest::new("ablate", Some(cfg.train.seed), serde_json::to_value(&cfg)?, inputs))
}
