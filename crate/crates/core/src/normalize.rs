//! Reversible digraph unification.
//!
//! Each multi-character grapheme of a profile is replaced by a single
//! private-use code point, which shortens sequences without losing anything:
//! [`denormalize`] restores the original text exactly.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::text::{is_private_use, OrthographyProfile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("normalization table conflict: {0}")]
    TableConflict(String),
    #[error("private-use character U+{code:04X} at code point {position} is not in the table")]
    UnknownPrivateChar { code: u32, position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationTable {
    /// Longest source first.
    entries: Vec<(String, char)>,
    origin_profile: String,
    inverse: HashMap<char, String>,
}

impl NormalizationTable {
    /// Builds a table from `(source, replacement)` pairs, checking every invariant.
    pub fn new(
        origin_profile: impl Into<String>,
        pairs: Vec<(String, char)>,
    ) -> Result<Self, NormalizeError> {
        let mut sources = HashSet::new();
        let mut inverse = HashMap::new();
        for (src, rep) in &pairs {
            let n = src.chars().count();
            if !(1..=4).contains(&n) {
                return Err(NormalizeError::TableConflict(format!(
                    "source {src:?} must have 1 to 4 code points"
                )));
            }
            if !is_private_use(*rep) {
                return Err(NormalizeError::TableConflict(format!(
                    "replacement U+{:04X} for {src:?} is not private-use",
                    *rep as u32
                )));
            }
            if !sources.insert(src.clone()) {
                return Err(NormalizeError::TableConflict(format!(
                    "duplicate source {src:?}"
                )));
            }
            if inverse.insert(*rep, src.clone()).is_some() {
                return Err(NormalizeError::TableConflict(format!(
                    "replacement U+{:04X} assigned twice",
                    *rep as u32
                )));
            }
        }
        for (src, _) in &pairs {
            if let Some(c) = src.chars().find(|c| inverse.contains_key(c)) {
                return Err(NormalizeError::TableConflict(format!(
                    "source {src:?} contains replacement U+{:04X}",
                    c as u32
                )));
            }
        }
        let mut entries = pairs;
        // Stable, so equal-length sources keep profile order.
        entries.sort_by_key(|(src, _)| std::cmp::Reverse(src.chars().count()));
        Ok(NormalizationTable {
            entries,
            origin_profile: origin_profile.into(),
            inverse,
        })
    }

    pub fn entries(&self) -> &[(String, char)] {
        &self.entries
    }

    pub fn origin_profile(&self) -> &str {
        &self.origin_profile
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// The source string a replacement stands for.
    pub fn source_of(&self, replacement: char) -> Option<&str> {
        self.inverse.get(&replacement).map(String::as_str)
    }
}

/// One table entry per profile digraph, replacements taken from the profile.
pub fn compile_table(profile: &OrthographyProfile) -> Result<NormalizationTable, NormalizeError> {
    NormalizationTable::new(profile.id.clone(), profile.digraphs.clone())
}

/// Left-to-right, longest-match replacement of table sources.
pub fn normalize(text: &str, table: &NormalizationTable) -> String {
    if table.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'scan: while let Some(c) = rest.chars().next() {
        for (src, rep) in &table.entries {
            if rest.starts_with(src.as_str()) {
                out.push(*rep);
                rest = &rest[src.len()..];
                continue 'scan;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Replaces each table code point by its source; other private-use characters are an error.
pub fn denormalize(text: &str, table: &NormalizationTable) -> Result<String, NormalizeError> {
    let mut out = String::with_capacity(text.len() + text.len() / 2);
    for (position, c) in text.chars().enumerate() {
        match table.inverse.get(&c) {
            Some(src) => out.push_str(src),
            None if is_private_use(c) => {
                return Err(NormalizeError::UnknownPrivateChar {
                    code: c as u32,
                    position,
                })
            }
            None => out.push(c),
        }
    }
    Ok(out)
}
