use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tol::BLEU_SMOOTHING;

/// Mean sentence-level BLEU plus how many candidates were left out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BleuScore {
    pub score: f64,
    pub scored: usize,
    /// Empty candidates, which are not scored.
    pub skipped_empty: usize,
}

type Counts<'a, T> = HashMap<&'a [T], usize>;

fn counts<T: Hash + Eq>(s: &[T], n: usize) -> Counts<'_, T> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for w in s.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Reference length closest to `c`, the shorter one on ties.
fn closest(lengths: impl Iterator<Item = usize>, c: usize) -> usize {
    lengths
        .min_by_key(|&r| (r.abs_diff(c), r))
        .expect("at least one reference")
}

/// BLEU of one candidate given its per-order clipped matches and the
/// chosen reference length. Orders with no candidate n-gram are left out
/// of the geometric mean, so a short verbatim candidate still scores 1.
fn combine(c_len: usize, matched: &[usize], r_len: usize) -> f64 {
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for (i, &m) in matched.iter().enumerate() {
        let n = i + 1;
        if c_len < n {
            break;
        }
        let total = (c_len + 1 - n) as f64;
        let p = if m == 0 { BLEU_SMOOTHING } else { m as f64 / total };
        log_sum += p.ln();
        orders += 1;
    }
    let bp = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

fn mean_in_order(scores: Vec<Option<f64>>) -> BleuScore {
    let mut sum = 0.0;
    let mut scored = 0;
    let mut skipped_empty = 0;
    for s in scores {
        match s {
            Some(v) => {
                sum += v;
                scored += 1;
            }
            None => skipped_empty += 1,
        }
    }
    BleuScore {
        score: if scored == 0 { 0.0 } else { sum / scored as f64 },
        scored,
        skipped_empty,
    }
}

/// Per-order maximum count of every n-gram over a reference set.
struct RefMax<'a, T> {
    max: Vec<Counts<'a, T>>,
}

impl<'a, T: Hash + Eq> RefMax<'a, T> {
    fn new(refs: &'a [Vec<T>], n_max: usize) -> Self {
        let mut max: Vec<Counts<'a, T>> = (0..n_max).map(|_| HashMap::new()).collect();
        for r in refs {
            for (i, m) in max.iter_mut().enumerate() {
                for (g, c) in counts(r, i + 1) {
                    let e = m.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
        }
        RefMax { max }
    }
}

fn check_n(n_max: usize) -> Result<()> {
    if n_max == 0 {
        return Err(Error::Config("BLEU order must be at least 1".into()));
    }
    Ok(())
}

/// Sentence-level BLEU of each candidate against the whole reference
/// set, averaged over candidates.
pub fn bleu_n<T>(candidates: &[Vec<T>], references: &[Vec<T>], n_max: usize) -> Result<BleuScore>
where
    T: Hash + Eq + Sync,
{
    check_n(n_max)?;
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    if references.is_empty() {
        return Err(Error::EmptyInput("references"));
    }
    let table = RefMax::new(references, n_max);
    let ref_lens: Vec<usize> = references.iter().map(Vec::len).collect();
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|c| {
            if c.is_empty() {
                return None;
            }
            let matched: Vec<usize> = (1..=n_max)
                .map(|n| {
                    counts(c, n)
                        .into_iter()
                        .map(|(g, k)| k.min(table.max[n - 1].get(g).copied().unwrap_or(0)))
                        .sum()
                })
                .collect();
            Some(combine(c.len(), &matched, closest(ref_lens.iter().copied(), c.len())))
        })
        .collect();
    Ok(mean_in_order(scores))
}

/// Largest and second-largest count of an n-gram over the candidate set,
/// with the owner of the largest, so that leaving one sentence out is O(1).
#[derive(Clone, Copy, Default)]
struct Top2 {
    first: usize,
    owner: usize,
    second: usize,
}

impl Top2 {
    fn push(&mut self, count: usize, idx: usize) {
        if count > self.first {
            self.second = self.first;
            self.first = count;
            self.owner = idx;
        } else if count > self.second {
            self.second = count;
        }
    }

    fn without(&self, idx: usize) -> usize {
        if self.owner == idx {
            self.second
        } else {
            self.first
        }
    }
}

/// Mean BLEU of each candidate against all the others.
pub fn self_bleu<T>(candidates: &[Vec<T>], n_max: usize) -> Result<BleuScore>
where
    T: Hash + Eq + Sync,
{
    check_n(n_max)?;
    if candidates.len() < 2 {
        return Err(Error::Config(format!(
            "self-BLEU needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let mut top: Vec<HashMap<&[T], Top2>> = (0..n_max).map(|_| HashMap::new()).collect();
    for (idx, c) in candidates.iter().enumerate() {
        for (i, m) in top.iter_mut().enumerate() {
            for (g, k) in counts(c, i + 1) {
                m.entry(g).or_default().push(k, idx);
            }
        }
    }
    let mut len_hist: HashMap<usize, usize> = HashMap::new();
    for c in candidates {
        *len_hist.entry(c.len()).or_insert(0) += 1;
    }
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .enumerate()
        .map(|(idx, c)| {
            if c.is_empty() {
                return None;
            }
            let matched: Vec<usize> = (1..=n_max)
                .map(|n| {
                    counts(c, n)
                        .into_iter()
                        .map(|(g, k)| k.min(top[n - 1][g].without(idx)))
                        .sum()
                })
                .collect();
            let others = len_hist
                .iter()
                .filter(|&(&l, &cnt)| cnt > usize::from(l == c.len()))
                .map(|(&l, _)| l);
            Some(combine(c.len(), &matched, closest(others, c.len())))
        })
        .collect();
    Ok(mean_in_order(scores))
}

/// Whitespace tokenization for scoring plain text lines.
pub fn split_tokens<S: AsRef<str>>(lines: &[S]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.as_ref().split_whitespace().map(str::to_string).collect())
        .collect()
}
