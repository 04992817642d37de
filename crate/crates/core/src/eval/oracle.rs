//! Naive n-gram counting, kept apart from the scorer so it can check it.

use std::collections::BTreeMap;

/// Counts of every contiguous n-gram of one order in one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramProfile<T: Ord> {
    pub n: usize,
    pub counts: BTreeMap<Vec<T>, usize>,
}

impl<T: Ord> NgramProfile<T> {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, gram: &[T]) -> usize
    where
        T: Clone,
    {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

/// Brute-force sliding-window counts.
pub fn ngram_oracle<T: Ord + Clone>(sentence: &[T], n: usize) -> NgramProfile<T> {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts = BTreeMap::new();
    let mut start = 0;
    while start + n <= sentence.len() {
        let gram: Vec<T> = sentence[start..start + n].to_vec();
        *counts.entry(gram).or_insert(0) += 1;
        start += 1;
    }
    NgramProfile { n, counts }
}
