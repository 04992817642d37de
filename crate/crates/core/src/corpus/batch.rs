use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::text::Corpus;
use super::vocab::PAD;
use crate::error::{Error, Result};

/// Padded mini-batch of full sentences (BOS and EOS included).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Corpus indices of the rows.
    pub indices: Vec<usize>,
    /// Rows padded with PAD to the longest sentence in the batch.
    pub ids: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Row `i` without padding.
    pub fn sentence(&self, i: usize) -> &[usize] {
        &self.ids[i][..self.lengths[i]]
    }
}

/// Sentence order for `epoch`, derived from `seed` alone.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
}

fn make_batch(corpus: &Corpus, indices: Vec<usize>) -> Batch {
    let lengths: Vec<usize> = indices.iter().map(|&i| corpus.sentence(i).len()).collect();
    let width = lengths.iter().copied().max().unwrap_or(0);
    let ids = indices
        .iter()
        .map(|&i| {
            let mut row = corpus.sentence(i).to_vec();
            row.resize(width, PAD);
            row
        })
        .collect();
    Batch {
        indices,
        ids,
        lengths,
    }
}

/// One shuffled pass over a corpus.
pub struct BatchIter<'a> {
    corpus: &'a Corpus,
    order: Vec<usize>,
    batch: usize,
    pos: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(make_batch(self.corpus, indices))
    }
}

pub fn batch_iter(corpus: &Corpus, batch: usize, seed: u64, epoch: u64) -> Result<BatchIter<'_>> {
    if batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok(BatchIter {
        corpus,
        order: epoch_order(corpus.len(), seed, epoch),
        batch,
        pos: 0,
    })
}

/// The `k`-th batch of an endless epoch-by-epoch stream, so a run can be
/// resumed at any step without replaying earlier batches.
pub fn batch_at(corpus: &Corpus, batch: usize, seed: u64, k: u64) -> Result<Batch> {
    if batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let per_epoch = corpus.len().div_ceil(batch) as u64;
    let (epoch, pos) = (k / per_epoch, (k % per_epoch) as usize);
    let order = epoch_order(corpus.len(), seed, epoch);
    let end = ((pos + 1) * batch).min(order.len());
    Ok(make_batch(corpus, order[pos * batch..end].to_vec()))
}
