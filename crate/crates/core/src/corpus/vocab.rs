use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Bijective word ↔ id map. Ids 0..4 are the specials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Vocabulary from an explicit word list (specials are prepended).
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(words.into_iter().map(Into::into));
        Vocab::from_id_list(all)
    }

    /// Rebuilds a vocabulary from its full id → word list, specials included.
    pub fn from_id_list(words: Vec<String>) -> Result<Self> {
        if words.len() < SPECIALS.len() || words[..4].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(Error::Config("vocabulary must start with the four specials".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Vocab { words, index })
    }

    /// Frequency-sorted vocabulary (ties alphabetical); words seen fewer
    /// than `min_count` times are left out and map to UNK.
    pub fn build<'a, I>(sentences: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for s in sentences {
            any = true;
            for w in tokenize(s) {
                *counts.entry(w).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::Config("cannot build a vocabulary from no sentences".into()));
        }
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !SPECIALS.contains(&w.as_str()))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocab::from_words(entries.into_iter().map(|(w, _)| w))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    /// Ids of the words of `sentence`, without BOS/EOS.
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        tokenize(sentence).iter().map(|w| self.id(w)).collect()
    }

    /// Joins the non-special words, stopping at EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out: Vec<&str> = Vec::new();
        for &id in ids {
            if id == EOS {
                break;
            }
            if id == PAD || id == BOS {
                continue;
            }
            out.push(self.word(id));
        }
        out.join(" ")
    }
}

/// Lowercased whitespace tokenization.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_with_specials_first() {
        let v = Vocab::build(["a b", "a"], 1).unwrap();
        assert_eq!(v.words(), &["<pad>", "<bos>", "<eos>", "<unk>", "a", "b"]);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
    }

    #[test]
    fn min_count_maps_rare_words_to_unk() {
        let v = Vocab::build(["a b", "a"], 2).unwrap();
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn ties_are_alphabetical_and_stable() {
        let a = Vocab::build(["z y x", "x y z"], 1).unwrap();
        let b = Vocab::build(["x y z", "z y x"], 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.words()[4..], &["x", "y", "z"]);
    }

    #[test]
    fn empty_input_is_config_error() {
        assert!(matches!(Vocab::build(Vec::<&str>::new(), 1), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip() {
        let v = Vocab::build(["the cat sat on the mat"], 1).unwrap();
        let ids = v.encode("the cat sat on the mat");
        assert_eq!(v.decode(&ids), "the cat sat on the mat");
    }

    #[test]
    fn lowercases_on_ingestion() {
        let v = Vocab::build(["The THE the"], 1).unwrap();
        assert_eq!(v.len(), 5);
    }
}
