//! `sparsegan`: data synthesis, pretraining, adversarial training,
//! sampling and evaluation, one subcommand each. Every command writes into
//! a run directory and leaves a `manifest.json` at its root.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::TrainFlags;

#[derive(Parser, Debug)]
#[command(name = "sparsegan", version, about = "Sparse-coded adversarial text generation")]
#[command(after_help = "Log verbosity comes from SPARSEGAN_LOG (error, warn, info, debug, trace).")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

const CONFIG_NOTE: &str = "Training settings resolve in this order, later wins: built-in defaults \
(shown), the configuration stored in the input checkpoint, --config, then flags.";

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample a training and a held-out corpus from the toy grammar.
    SynthData(SynthArgs),
    /// Build the vocabulary and pretrain the denoising auto-encoder.
    #[command(after_help = CONFIG_NOTE)]
    PretrainDae(PretrainDaeArgs),
    /// Pretrain the generator by maximum likelihood from a DAE checkpoint.
    #[command(after_help = CONFIG_NOTE)]
    PretrainGen(PretrainGenArgs),
    /// Adversarial training from a pretrained or a training checkpoint.
    #[command(after_help = CONFIG_NOTE)]
    Train(TrainArgs),
    /// Sample sentences from a checkpoint.
    #[command(after_help = CONFIG_NOTE)]
    Generate(GenerateArgs),
    /// BLEU and self-BLEU of candidates against references.
    Eval(EvalArgs),
    /// Dump the sparse codes of a sentence's auto-encoder states as JSON lines.
    #[command(after_help = CONFIG_NOTE)]
    Encode(EncodeArgs),
    /// Toy experiment once per encoder from a shared pretrained start.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Run directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// TOML file whose keys are training setting names.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training sentences.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Held-out sentences, drawn after the training ones.
    #[arg(long, default_value_t = 200)]
    heldout: usize,
}

#[derive(Args, Debug)]
struct PretrainDaeArgs {
    #[command(flatten)]
    common: Common,
    /// One sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, help = config::dflt("seed", "Seed of initialization, noise and batching"))]
    seed: Option<u64>,
    /// GloVe-style text vectors; words without one are sampled.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Standard deviation of sampled embeddings when --embeddings is absent.
    #[arg(long, default_value_t = 1.0)]
    emb_std: f64,
    /// Words seen fewer times map to UNK.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct PretrainGenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint written by pretrain-dae.
    #[arg(long)]
    init: PathBuf,
    #[arg(long, help = config::dflt("seed", "Seed of latents and batching"))]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: PathBuf,
    /// Pretrained checkpoint, or a training checkpoint to resume.
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecodeArg {
    Sample,
    Greedy,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Sentences to sample.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, value_enum, default_value_t = DecodeArg::Sample)]
    decode: DecodeArg,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    out: PathBuf,
    /// One candidate per line; empty lines count as empty candidates.
    #[arg(long)]
    candidates: PathBuf,
    /// One reference per line.
    #[arg(long)]
    references: PathBuf,
    /// BLEU orders, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 5])]
    orders: Vec<usize>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    sentence: String,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML toy configuration: n_train, n_heldout, n_generate, eval_seed,
    /// emb_std and a [train] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Adversarial iterations per encoder [default: 200].
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "sparse,topk-static,topk-dynamic",
          value_parser = ["sparse", "topk-static", "topk-dynamic", "none"])]
    encoders: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPARSEGAN_LOG", "info")).init();
    let cli = Cli::parse();
    match commands::run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
