use std::fs;
use std::path::Path;

use log::warn;

use super::vocab::{Vocab, BOS, EOS};
use crate::error::{Error, Result};

/// Longest sentence kept, specials included.
pub const DEFAULT_MAX_LEN: usize = 40;

/// Tokenized sentences, each wrapped as `[BOS, w₁, …, wₙ, EOS]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    sentences: Vec<Vec<usize>>,
    max_len_observed: usize,
    truncated: usize,
}

impl Corpus {
    /// Tokenizes `lines` (blank lines skipped), truncating each sentence to
    /// `max_len` ids including BOS and EOS.
    pub fn from_lines<'a, I>(lines: I, vocab: &Vocab, max_len: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if max_len < 3 {
            return Err(Error::Config(format!("max_len {max_len} leaves no room for words")));
        }
        let mut sentences = Vec::new();
        let mut truncated = 0;
        for line in lines {
            let mut words = vocab.encode(line);
            if words.is_empty() {
                continue;
            }
            if words.len() + 2 > max_len {
                words.truncate(max_len - 2);
                truncated += 1;
            }
            let mut ids = Vec::with_capacity(words.len() + 2);
            ids.push(BOS);
            ids.extend(words);
            ids.push(EOS);
            sentences.push(ids);
        }
        if sentences.is_empty() {
            return Err(Error::Config("corpus contains no sentences".into()));
        }
        if truncated > 0 {
            warn!("truncated {truncated} sentences to {max_len} tokens");
        }
        let max_len_observed = sentences.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Corpus {
            sentences,
            max_len_observed,
            truncated,
        })
    }

    pub fn from_ids(sentences: Vec<Vec<usize>>) -> Result<Self> {
        if sentences.is_empty() || sentences.iter().any(|s| s.len() < 3) {
            return Err(Error::Config("corpus sentences need BOS, a word and EOS".into()));
        }
        let max_len_observed = sentences.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Corpus {
            sentences,
            max_len_observed,
            truncated: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Full id sequence of sentence `i`, BOS and EOS included.
    pub fn sentence(&self, i: usize) -> &[usize] {
        &self.sentences[i]
    }

    /// Words of sentence `i` without BOS and EOS.
    pub fn words(&self, i: usize) -> &[usize] {
        let s = &self.sentences[i];
        &s[1..s.len() - 1]
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn max_len_observed(&self) -> usize {
        self.max_len_observed
    }

    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        for s in &self.sentences {
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab.len()) {
                return Err(Error::Config(format!("token id {bad} outside vocabulary of {}", vocab.len())));
            }
        }
        Ok(())
    }
}

fn read_lines(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a one-sentence-per-line UTF-8 file. Without a vocabulary, one is
/// built from the file itself with `min_count = 1`.
pub fn load_corpus(path: &Path, vocab: Option<&Vocab>, max_len: usize) -> Result<(Corpus, Vocab)> {
    let text = read_lines(path)?;
    if text.trim().is_empty() {
        return Err(Error::Config(format!("{} is empty", path.display())));
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => Vocab::build(text.lines(), 1)?,
    };
    let corpus = Corpus::from_lines(text.lines(), &vocab, max_len)?;
    Ok((corpus, vocab))
}

/// Reads raw sentences (one per line, blank lines skipped).
pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    Ok(read_lines(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
