//! Small probabilistic grammar for desk-scale experiments.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pattern element: a word category, or an optional group included with
/// probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Cat(String),
    Opt { p: f64, items: Vec<Item> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub categories: BTreeMap<String, Vec<String>>,
    pub pattern: Vec<Item>,
}

fn cat(name: &str) -> Item {
    Item::Cat(name.to_string())
}

fn opt(p: f64, items: Vec<Item>) -> Item {
    Item::Opt { p, items }
}

impl Grammar {
    /// `DET ADJ? NOUN VERB ADV? DET ADJ? NOUN (PREP DET ADJ? NOUN)?` over
    /// 28 terminals; sentences have 5 to 12 words.
    pub fn toy() -> Self {
        let mut categories = BTreeMap::new();
        let mut add = |name: &str, words: &[&str]| {
            categories.insert(name.to_string(), words.iter().map(|w| w.to_string()).collect());
        };
        add("DET", &["a", "the", "every"]);
        add("ADJ", &["big", "small", "red", "old", "happy"]);
        add("NOUN", &["dog", "cat", "man", "woman", "bird", "car", "tree", "house"]);
        add("VERB", &["sees", "likes", "chases", "finds", "watches"]);
        add("ADV", &["quickly", "often", "rarely"]);
        add("PREP", &["near", "under", "behind", "with"]);
        let pattern = vec![
            cat("DET"),
            opt(0.4, vec![cat("ADJ")]),
            cat("NOUN"),
            cat("VERB"),
            opt(0.3, vec![cat("ADV")]),
            cat("DET"),
            opt(0.4, vec![cat("ADJ")]),
            cat("NOUN"),
            opt(0.3, vec![cat("PREP"), cat("DET"), opt(0.4, vec![cat("ADJ")]), cat("NOUN")]),
        ];
        Grammar { categories, pattern }
    }

    pub fn terminals(&self) -> Vec<&str> {
        self.categories.values().flatten().map(String::as_str).collect()
    }

    fn sample_items(&self, items: &[Item], rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
        for item in items {
            match item {
                Item::Cat(c) => {
                    let words = &self.categories[c];
                    out.push(words.choose(rng).expect("non-empty category").clone());
                }
                Item::Opt { p, items } => {
                    if rng.random_bool(*p) {
                        self.sample_items(items, rng, out);
                    }
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut out = Vec::new();
        self.sample_items(&self.pattern, rng, &mut out);
        out
    }

    /// Whether `words` is derivable from the pattern.
    pub fn parses<S: AsRef<str>>(&self, words: &[S]) -> bool {
        let words: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
        self.match_from(&self.pattern, &words, 0).contains(&words.len())
    }

    /// All positions reachable after matching `items` starting at `pos`.
    fn match_from(&self, items: &[Item], words: &[&str], pos: usize) -> Vec<usize> {
        let mut frontier = vec![pos];
        for item in items {
            let mut next = Vec::new();
            for &p in &frontier {
                match item {
                    Item::Cat(c) => {
                        if p < words.len() && self.categories[c].iter().any(|w| w == words[p]) {
                            next.push(p + 1);
                        }
                    }
                    Item::Opt { items, .. } => {
                        next.push(p);
                        next.extend(self.match_from(items, words, p));
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        frontier
    }
}

/// Sentences drawn from a grammar, plus the grammar itself.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub sentences: Vec<String>,
    pub grammar: Grammar,
}

pub fn synth_grammar(seed: u64, n_sentences: usize) -> Result<SynthData> {
    if n_sentences == 0 {
        return Err(Error::Config("n_sentences must be at least 1".into()));
    }
    let grammar = Grammar::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n_sentences).map(|_| grammar.sample(&mut rng).join(" ")).collect();
    Ok(SynthData { sentences, grammar })
}

/// Fraction of `sentences` the grammar derives.
pub fn membership_rate<S: AsRef<str>>(grammar: &Grammar, sentences: &[S]) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    let ok = sentences
        .iter()
        .filter(|s| {
            let words: Vec<&str> = s.as_ref().split_whitespace().collect();
            grammar.parses(&words)
        })
        .count();
    ok as f64 / sentences.len() as f64
}
