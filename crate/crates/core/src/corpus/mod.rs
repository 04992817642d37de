//! Vocabulary, corpus and embedding ingestion, batching and a synthetic
//! grammar for small experiments.

mod batch;
mod embeddings;
mod grammar;
mod text;
mod vocab;

pub use batch::{batch_at, batch_iter, epoch_order, Batch, BatchIter};
pub use embeddings::{load_embeddings, random_embeddings, EmbeddingInit, OOV_STD};
pub use grammar::{membership_rate, synth_grammar, Grammar, Item, SynthData};
pub use text::{load_corpus, read_sentences, Corpus, DEFAULT_MAX_LEN};
pub use vocab::{tokenize, Vocab, BOS, EOS, PAD, UNK};
