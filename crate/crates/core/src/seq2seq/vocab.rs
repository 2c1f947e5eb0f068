use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Seq2SeqError;
use crate::corpus::ParallelCorpus;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: usize = 4;

/// Dense ids for characters; ids 0-3 are PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
    ids: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let sorted: BTreeSet<char> = chars.into_iter().collect();
        let chars: Vec<char> = sorted.into_iter().collect();
        let ids = chars
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i + SPECIALS))
            .collect();
        Vocabulary { chars, ids }
    }

    pub fn len(&self) -> usize {
        self.chars.len() + SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.ids.get(&c).copied().unwrap_or(UNK)
    }

    /// The character for a non-special id.
    pub fn char(&self, id: usize) -> Option<char> {
        id.checked_sub(SPECIALS)
            .and_then(|i| self.chars.get(i))
            .copied()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.char(i)).collect()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyJson {
    specials: [String; 4],
    chars: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabularyJson {
            specials: [
                "<pad>".into(),
                "<bos>".into(),
                "<eos>".into(),
                "<unk>".into(),
            ],
            chars: self.chars.iter().map(|c| c.to_string()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = VocabularyJson::deserialize(d)?;
        let mut chars = Vec::with_capacity(raw.chars.len());
        for s in &raw.chars {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(serde::de::Error::custom(format!(
                        "vocabulary entry {s:?} is not one character"
                    )))
                }
            }
        }
        let v = Vocabulary::from_chars(chars.iter().copied());
        if v.chars != chars {
            return Err(serde::de::Error::custom(
                "vocabulary entries must be unique and sorted by code point",
            ));
        }
        Ok(v)
    }
}

/// Every character on either side of the corpus, ordered by code point.
pub fn build_vocab(corpus: &ParallelCorpus) -> Result<Vocabulary, Seq2SeqError> {
    if corpus.is_empty() {
        return Err(Seq2SeqError::EmptyCorpus);
    }
    Ok(Vocabulary::from_chars(
        corpus
            .examples
            .iter()
            .flat_map(|e| e.source.chars().chain(e.target.chars())),
    ))
}
