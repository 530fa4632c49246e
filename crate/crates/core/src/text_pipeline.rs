//! Text normalization, stemming, vocabulary and fixed-length encoding for
//! the layer-4 classifier.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::porter;

pub const STOP_WORDS_ASSET: &str = include_str!("../assets/stopwords-en-v1.txt");

pub const DEFAULT_SEQUENCE_LENGTH: usize = 100;
pub const DEFAULT_MAX_FEATURES: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub fn stop_words() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        STOP_WORDS_ASSET
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercases, turns every non-alphanumeric character into a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    normalized.split_whitespace().map(str::to_string).collect()
}

/// Tokenize, drop stop words, Porter-stem. Stems that collide with a stop
/// word are dropped as well, so no stop word ever reaches the vocabulary.
pub fn preprocess(text: &str) -> Vec<String> {
    let stops = stop_words();
    tokenize(text)
        .into_iter()
        .filter(|t| !stops.contains(t.as_str()))
        .map(|t| porter::stem(&t))
        .filter(|t| !stops.contains(t.as_str()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    max_features: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    max_features: usize,
    words: Vec<String>,
}

impl Vocabulary {
    /// `words` in rank order; word `words[i]` gets index `i + 1`.
    pub fn from_ranked(words: Vec<String>, max_features: usize) -> Result<Self, TextError> {
        if words.len() > max_features {
            return Err(TextError::Argument(format!(
                "{} words exceed max_features {max_features}",
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i + 1).is_some() {
                return Err(TextError::Argument(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self {
            max_features,
            words,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&VocabularyFile {
            max_features: self.max_features,
            words: self.words.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TextError> {
        let file: VocabularyFile =
            serde_json::from_str(s).map_err(|e| TextError::Argument(e.to_string()))?;
        Self::from_ranked(file.words, file.max_features)
    }
}

/// Ranks words by descending corpus frequency, ties alphabetically, and
/// keeps at most `max_features` of them.
pub fn build_vocabulary(
    corpus: &[Vec<String>],
    max_features: usize,
) -> Result<Vocabulary, TextError> {
    if max_features == 0 {
        return Err(TextError::Argument(
            "max_features must be at least 1".into(),
        ));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for tok in doc {
            *freq.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    if freq.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words = ranked
        .into_iter()
        .take(max_features)
        .map(|(w, _)| w.to_string())
        .collect();
    Vocabulary::from_ranked(words, max_features)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub indices: Vec<usize>,
    /// In-vocabulary token count before truncation or padding.
    pub original_length: usize,
}

/// Maps tokens through `vocab` (dropping unknown ones), keeps the last
/// `sequence_length` indices and left-pads with 0.
pub fn encode(tokens: &[String], vocab: &Vocabulary, sequence_length: usize) -> TokenSequence {
    let known: Vec<usize> = tokens.iter().filter_map(|t| vocab.get(t)).collect();
    let keep = known.len().min(sequence_length);
    let mut indices = vec![0; sequence_length - keep];
    indices.extend_from_slice(&known[known.len() - keep..]);
    TokenSequence {
        indices,
        original_length: known.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn stemming_examples() {
        assert_eq!(preprocess("university"), vec!["univers"]);
        assert_eq!(preprocess("calamity"), vec!["calam"]);
        assert!(preprocess("The THE the").is_empty());
        assert!(preprocess("").is_empty());
    }

    #[test]
    fn punctuation_becomes_separators() {
        assert_eq!(
            preprocess("Verify-your PASSWORD!!"),
            vec!["verifi", "password"]
        );
    }

    #[test]
    fn stop_word_asset_has_articles() {
        let s = stop_words();
        for w in ["a", "an", "the"] {
            assert!(s.contains(w));
        }
    }

    #[test]
    fn vocabulary_ranking_and_cap() {
        let v = build_vocabulary(&[toks(&["a", "b", "b"])], 10).unwrap();
        assert_eq!(v.get("b"), Some(1));
        assert_eq!(v.get("a"), Some(2));
        let capped = build_vocabulary(&[toks(&["x", "y"])], 1).unwrap();
        assert_eq!(capped.len(), 1);
        assert_eq!(capped.get("x"), Some(1));
        assert_eq!(build_vocabulary(&[vec![]], 5), Err(TextError::EmptyCorpus));
        assert!(build_vocabulary(&[toks(&["x"])], 0).is_err());
    }

    #[test]
    fn encoding_pads_and_truncates_from_the_front() {
        let v = build_vocabulary(&[toks(&["a", "b", "c", "d", "e", "f", "g"])], 100).unwrap();
        assert_eq!(encode(&[], &v, 5).indices, vec![0; 5]);
        let seq = encode(&toks(&["a", "b", "c", "d", "e", "f", "g"]), &v, 5);
        let expected: Vec<usize> = ["c", "d", "e", "f", "g"]
            .iter()
            .map(|w| v.get(w).unwrap())
            .collect();
        assert_eq!(seq.indices, expected);
        assert_eq!(seq.original_length, 7);
        let oov = encode(&toks(&["zzz", "a"]), &v, 3);
        assert_eq!(oov.indices, vec![0, 0, v.get("a").unwrap()]);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let v = build_vocabulary(&[toks(&["win", "prize", "win"])], 50).unwrap();
        let json = v.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["max_features"], 50);
        assert_eq!(parsed["words"], serde_json::json!(["win", "prize"]));
        assert_eq!(Vocabulary::from_json(&json).unwrap(), v);
    }

    #[test]
    fn porter_is_not_idempotent_on_univers() {
        // Re-stemming a stem can shorten it again; preprocess applies the
        // stemmer exactly once.
        assert_eq!(preprocess("univers"), vec!["univ"]);
    }
}
