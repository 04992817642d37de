use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::vocab::{Vocab, PAD};
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Standard deviation of embeddings drawn for words without a vector.
pub const OOV_STD: f64 = 0.1;

/// Embedding matrix for a vocabulary plus the words that had to be sampled.
#[derive(Clone, Debug)]
pub struct EmbeddingInit {
    /// `N × d`, row `i` for vocabulary id `i`; the PAD row is zero.
    pub table: Tensor,
    /// Non-special vocabulary words absent from the embedding file.
    pub oov: Vec<String>,
}

/// Every row drawn from `N(0, std²)` except PAD, which is zero.
pub fn random_embeddings(n: usize, d: usize, std: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut data: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
    data[PAD * d..(PAD + 1) * d].fill(0.0);
    Tensor::matrix(n, d, data).expect("shape matches")
}

/// Reads GloVe-style text vectors (`word f₁ … f_d` per line). Vocabulary
/// words without a vector, specials other than PAD included, are sampled
/// with the run seed.
pub fn load_embeddings(path: &Path, vocab: &Vocab, d: usize, seed: u64) -> Result<EmbeddingInit> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut found: HashMap<usize, Vec<f64>> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: format!("{p:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != d {
            return Err(Error::Config(format!(
                "line {}: expected {d} values for {word:?}, found {}",
                lineno + 1,
                values.len()
            )));
        }
        if vocab.contains(word) {
            found.entry(vocab.id(word)).or_insert(values);
        }
    }
    let mut table = random_embeddings(vocab.len(), d, OOV_STD, seed);
    let mut oov = Vec::new();
    for id in 0..vocab.len() {
        if id == PAD {
            continue;
        }
        match found.get(&id) {
            Some(v) => table.data_mut()[id * d..(id + 1) * d].copy_from_slice(v),
            None if !Vocab::is_special(id) => oov.push(vocab.word(id).to_string()),
            None => {}
        }
    }
    Ok(EmbeddingInit { table, oov })
}
