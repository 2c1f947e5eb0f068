//! Rule-based orthography converter with High Tone Spreading.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;

use crate::normalize::{compile_table, denormalize, normalize, NormalizeError};
use crate::text::{
    is_nasal, is_vowel, nfd, parse_tones, render_tones, OrthographyProfile, ToneError, ToneMark,
    TonedText,
};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{file}: line {line}, column {column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {file}: {message}")]
    Io { file: String, message: String },
    #[error("substitutions[{index}]: duplicate source {duplicate:?}")]
    DuplicateSource { index: usize, duplicate: String },
    #[error("substitutions[{index}]: {message}")]
    InvalidSubstitution { index: usize, message: String },
}

/// Ordered string substitutions between two orthographies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub source_profile: String,
    pub target_profile: String,
    pub substitutions: Vec<(String, String)>,
    #[serde(default = "default_true")]
    pub apply_hts: bool,
}

fn default_true() -> bool {
    true
}

impl RuleSet {
    pub fn new(
        source_profile: impl Into<String>,
        target_profile: impl Into<String>,
        substitutions: Vec<(String, String)>,
        apply_hts: bool,
    ) -> Result<Self, RuleError> {
        let rules = RuleSet {
            source_profile: source_profile.into(),
            target_profile: target_profile.into(),
            substitutions: substitutions
                .into_iter()
                .map(|(s, t)| (nfd(&s), nfd(&t)))
                .collect(),
            apply_hts,
        };
        rules.validate()?;
        Ok(rules)
    }

    /// No substitutions and no tone rule.
    pub fn identity(profile: &str) -> Self {
        RuleSet {
            source_profile: profile.into(),
            target_profile: profile.into(),
            substitutions: Vec::new(),
            apply_hts: false,
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let mut seen = HashSet::new();
        for (index, (src, dst)) in self.substitutions.iter().enumerate() {
            if src.is_empty() {
                return Err(RuleError::InvalidSubstitution {
                    index,
                    message: "empty source".into(),
                });
            }
            if src
                .chars()
                .chain(dst.chars())
                .any(|c| is_combining_mark(c) || c.is_whitespace())
            {
                return Err(RuleError::InvalidSubstitution {
                    index,
                    message: "rules rewrite base letters only (no diacritics or whitespace)".into(),
                });
            }
            if !seen.insert(src.as_str()) {
                return Err(RuleError::DuplicateSource {
                    index,
                    duplicate: src.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str, file: &str) -> Result<Self, RuleError> {
        let raw: RuleSet = serde_json::from_str(json).map_err(|e| RuleError::Parse {
            file: file.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        RuleSet::new(
            raw.source_profile,
            raw.target_profile,
            raw.substitutions,
            raw.apply_hts,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }
}

pub fn load_rules(path: &Path) -> Result<RuleSet, RuleError> {
    let file = path.display().to_string();
    let json = std::fs::read_to_string(path).map_err(|e| RuleError::Io {
        file: file.clone(),
        message: e.to_string(),
    })?;
    RuleSet::from_json(&json, &file)
}

/// High Tone Spreading: every Low directly after a High becomes Falling.
///
/// One left-to-right pass over the input; the rewrite never creates a new
/// High-Low pair, so the result is a fixed point.
pub fn apply_hts(tones: &[ToneMark]) -> Vec<ToneMark> {
    let mut out = tones.to_vec();
    for i in 1..tones.len() {
        if tones[i - 1] == ToneMark::High && tones[i] == ToneMark::Low {
            out[i] = ToneMark::Falling;
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvertError {
    #[error("sentence {sentence}: {source}")]
    Tone { sentence: usize, source: ToneError },
    #[error("sentence {sentence}: {source}")]
    Normalize {
        sentence: usize,
        source: NormalizeError,
    },
    #[error(
        "rule set converts {rules_from:?} -> {rules_to:?} but profiles are {from:?} -> {to:?}"
    )]
    ProfileMismatch {
        rules_from: String,
        rules_to: String,
        from: String,
        to: String,
    },
}

/// A rule set bound to its two profiles, ready to convert sentences.
#[derive(Debug, Clone)]
pub struct Converter {
    source: OrthographyProfile,
    target: OrthographyProfile,
    table: crate::normalize::NormalizationTable,
    substitutions: Vec<(Vec<char>, Vec<char>)>,
    apply_hts: bool,
}

impl Converter {
    pub fn new(
        rules: &RuleSet,
        source: &OrthographyProfile,
        target: &OrthographyProfile,
    ) -> Result<Self, ConvertError> {
        if rules.source_profile != source.id || rules.target_profile != target.id {
            return Err(ConvertError::ProfileMismatch {
                rules_from: rules.source_profile.clone(),
                rules_to: rules.target_profile.clone(),
                from: source.id.clone(),
                to: target.id.clone(),
            });
        }
        let table = compile_table(source).map_err(|source| ConvertError::Normalize {
            sentence: 0,
            source,
        })?;
        let substitutions = rules
            .substitutions
            .iter()
            .map(|(s, t)| (normalize(s, &table).chars().collect(), t.chars().collect()))
            .collect();
        Ok(Converter {
            source: source.clone(),
            target: target.clone(),
            table,
            substitutions,
            apply_hts: rules.apply_hts,
        })
    }

    /// Converts one sentence; `sentence` is only used in error messages.
    pub fn convert_sentence(&self, text: &str, sentence: usize) -> Result<String, ConvertError> {
        let normalized = normalize(&nfd(text), &self.table);
        let mut toned = parse_tones(&normalized, &self.source)
            .map_err(|source| ConvertError::Tone { sentence, source })?;
        for (src, dst) in &self.substitutions {
            toned = substitute(&toned, src, dst, self.source.allow_unmarked_low);
        }
        if self.apply_hts {
            spread_high_tones(&mut toned);
        }
        let rendered = render_tones(&toned, &self.target)
            .map_err(|source| ConvertError::Tone { sentence, source })?;
        denormalize(&rendered, &self.table)
            .map_err(|source| ConvertError::Normalize { sentence, source })
    }

    pub fn convert_all<S: AsRef<str>>(&self, sentences: &[S]) -> Result<Vec<String>, ConvertError> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| self.convert_sentence(s.as_ref(), i + 1))
            .collect()
    }
}

/// Converts a single sentence from the source to the target orthography.
pub fn convert(
    text: &str,
    rules: &RuleSet,
    source: &OrthographyProfile,
    target: &OrthographyProfile,
) -> Result<String, ConvertError> {
    Converter::new(rules, source, target)?.convert_sentence(text, 1)
}

/// One left-to-right, non-overlapping pass of a single substitution.
///
/// Tones on nuclei inside a rewritten span move, in order, onto the nuclei of
/// the replacement; surplus tones are dropped and surplus vowels get Low when
/// `low_default` is set.
fn substitute(toned: &TonedText, src: &[char], dst: &[char], low_default: bool) -> TonedText {
    let chars: Vec<char> = toned.base.chars().collect();
    let mut tone_at = vec![None; chars.len()];
    for &(i, t) in &toned.tones {
        tone_at[i] = Some(t);
    }
    let mut base = String::with_capacity(toned.base.len());
    let mut tones = Vec::with_capacity(toned.tones.len());
    let mut out_len = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if chars[i..].starts_with(src) {
            let mut carried = tone_at[i..i + src.len()].iter().flatten().copied();
            for &c in dst {
                base.push(c);
                if is_vowel(c) || is_nasal(c) {
                    match carried.next() {
                        Some(t) => tones.push((out_len, t)),
                        None if low_default && is_vowel(c) => tones.push((out_len, ToneMark::Low)),
                        None => {}
                    }
                }
                out_len += 1;
            }
            i += src.len();
        } else {
            base.push(chars[i]);
            if let Some(t) = tone_at[i] {
                tones.push((out_len, t));
            }
            out_len += 1;
            i += 1;
        }
    }
    TonedText { base, tones }
}

/// Applies [`apply_hts`] to the tones of each whitespace-delimited word.
fn spread_high_tones(toned: &mut TonedText) {
    let word_of: Vec<usize> = toned
        .base
        .chars()
        .scan(0, |word, c| {
            *word += c.is_whitespace() as usize;
            Some(*word)
        })
        .collect();
    let word_of = |idx: usize| word_of[idx];
    let mut start = 0;
    while start < toned.tones.len() {
        let word = word_of(toned.tones[start].0);
        let mut end = start + 1;
        while end < toned.tones.len() && word_of(toned.tones[end].0) == word {
            end += 1;
        }
        let values: Vec<ToneMark> = toned.tones[start..end].iter().map(|t| t.1).collect();
        for (slot, t) in toned.tones[start..end].iter_mut().zip(apply_hts(&values)) {
            slot.1 = t;
        }
        start = end;
    }
}
