//! BLEU and Self-BLEU over tokenized sentences.

mod bleu;
mod oracle;

pub use bleu::{bleu_n, self_bleu, split_tokens, BleuScore};
pub use oracle::{ngram_oracle, NgramProfile};
