//! Generator, denoising auto-encoder, critic and the state encoders that
//! sit between them.

mod checkpoint;
mod critic;
mod dae;
mod encode;
mod generator;
mod lstm;
mod model;
mod params;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use critic::{penalty_at, penalty_of_grad, ConvCritic, Critic, LinearCritic};
pub use dae::{corrupt, corrupt_with, pad_rows, words_of, Dae};
pub use encode::{
    argmax_excluding, masked_weights, topk_dynamic_encode, topk_dynamic_mask, topk_dynamic_weights,
    topk_static_encode, topk_static_mask, topk_static_weights, vocab_logits, EncoderConfig, EncoderKind,
    GraphEncoder,
};
pub use generator::{
    generate_sequence, generator_stack, generator_step, teacher_forced, Decode, GenOutput, TeacherForced,
    NEVER_EMIT,
};
pub use lstm::{init_lstm, run_layer, LstmLayer, LstmStack, LstmState};
pub use model::{
    conv_name, init_critic, init_dae, init_generator, init_model, ModelConfig, CRITIC, DAE, EMB, GEN,
};
pub use params::{uniform, Bound, Grads, ParamStore, Role};
