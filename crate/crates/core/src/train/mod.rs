//! Pretraining, the WGAN-GP loop, checkpoints and the toy experiment.

mod adam;
mod adversarial;
mod config;
mod experiment;
mod generate;
mod metrics;
mod penalty;
mod pretrain;
mod rng;

pub use adam::Adam;
pub use adversarial::{CriticStats, GenStats, SamplePair, Trainer, EXCLUDED_ATOMS};
pub use config::{GpSpace, TrainConfig};
pub use experiment::{
    ablate, ablate_from, adversarial_toy, evaluate, prepare_toy, pretrain_toy, AblationReport, AdversarialResult, EvalSnapshot,
    PretrainSummary, Pretrained, ToyConfig, ToyData,
};
pub use generate::{encode_sentence, generate_ids};
pub use metrics::{MetricsLog, MetricsRecord};
pub use penalty::{encode_with_jacobian, gradient_penalty, gradient_penalty_hidden, interpolate};
pub use pretrain::{
    dae_evaluate, generator_evaluate, pretrain_dae, pretrain_generator, sample_z, target_of, PretrainReport,
};
pub use rng::{derive_rng, derive_seed, Phase};
