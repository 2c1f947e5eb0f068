//! Graphemes, tone marks and orthography profiles.
//!
//! Text is handled in canonical decomposed form (NFD) throughout the crate: a
//! toned vowel is its base letter followed by one combining diacritic, which
//! makes tone manipulation a matter of positions in a code-point sequence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// The seven vowel letters every profile alphabet must contain.
pub const VOWELS: [char; 7] = ['i', 'e', 'ɛ', 'u', 'o', 'ɔ', 'a'];

/// Nasal letters that can carry a tone as a syllabic nasal.
pub const NASALS: [char; 3] = ['m', 'n', 'ŋ'];

pub const COMBINING_ACUTE: char = '\u{0301}';
pub const COMBINING_GRAVE: char = '\u{0300}';
pub const COMBINING_CIRCUMFLEX: char = '\u{0302}';
pub const COMBINING_CARON: char = '\u{030C}';
pub const COMBINING_MACRON: char = '\u{0304}';

/// First code point handed out for unified digraphs.
pub const PRIVATE_USE_START: u32 = 0xE000;

/// Canonical decomposition of `text`.
pub fn nfd(text: &str) -> String {
    text.nfd().collect()
}

/// Canonical composition of `text`, used when writing files for people.
pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

pub fn is_private_use(c: char) -> bool {
    matches!(c as u32, 0xE000..=0xF8FF | 0xF0000..=0xFFFFD | 0x100000..=0x10FFFD)
}

pub fn is_vowel(c: char) -> bool {
    c.to_lowercase().all(|l| VOWELS.contains(&l))
}

pub fn is_nasal(c: char) -> bool {
    c.to_lowercase().all(|l| NASALS.contains(&l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToneMark {
    Low,
    High,
    /// LH contour.
    Rising,
    /// HL contour.
    Falling,
}

impl ToneMark {
    pub const ALL: [ToneMark; 4] = [
        ToneMark::Low,
        ToneMark::High,
        ToneMark::Rising,
        ToneMark::Falling,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            ToneMark::Low => "L",
            ToneMark::High => "H",
            ToneMark::Rising => "LH",
            ToneMark::Falling => "HL",
        }
    }
}

impl fmt::Display for ToneMark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// How a profile writes one tone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diacritic {
    Mark(char),
    Unmarked,
}

impl Serialize for Diacritic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Diacritic::Mark(c) => s.serialize_str(c.encode_utf8(&mut [0; 4])),
            Diacritic::Unmarked => s.serialize_str("unmarked"),
        }
    }
}

impl<'de> Deserialize<'de> for Diacritic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "unmarked" {
            return Ok(Diacritic::Unmarked);
        }
        let mut chars = raw.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(Diacritic::Mark(c)),
            _ => Err(serde::de::Error::custom(format!(
                "expected a single combining code point or \"unmarked\", got {raw:?}"
            ))),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read profile {file}: {message}")]
    Io { file: String, message: String },
    #[error("profile JSON is malformed: {0}")]
    Json(String),
}

impl ProfileError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ProfileError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Spelling conventions of one orthography.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthographyProfile {
    pub id: String,
    pub alphabet: Vec<String>,
    /// Multi-character graphemes and the private-use code point each one is unified into.
    pub digraphs: Vec<(String, char)>,
    pub tone_diacritics: BTreeMap<ToneMark, Diacritic>,
    pub allow_unmarked_low: bool,
}

impl OrthographyProfile {
    /// Assigns ascending private-use code points to `digraphs`, in the order given.
    pub fn assign_digraphs<S: AsRef<str>>(digraphs: &[S]) -> Vec<(String, char)> {
        digraphs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let c = char::from_u32(PRIVATE_USE_START + i as u32).expect("private-use range");
                (d.as_ref().to_string(), c)
            })
            .collect()
    }

    pub fn from_json(json: &str) -> Result<Self, ProfileError> {
        let profile: OrthographyProfile =
            serde_json::from_str(json).map_err(|e| ProfileError::Json(e.to_string()))?;
        let profile = profile.canonicalized();
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let json = std::fs::read_to_string(path).map_err(|e| ProfileError::Io {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    fn canonicalized(mut self) -> Self {
        for g in &mut self.alphabet {
            *g = nfd(g);
        }
        for (src, _) in &mut self.digraphs {
            *src = nfd(src);
        }
        self
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.id.trim().is_empty() {
            return Err(ProfileError::at("id", "must be non-empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, g) in self.alphabet.iter().enumerate() {
            if g.is_empty() {
                return Err(ProfileError::at(format!("alphabet[{i}]"), "empty grapheme"));
            }
            if g.chars().any(is_combining_mark) {
                return Err(ProfileError::at(
                    format!("alphabet[{i}]"),
                    "base graphemes may not contain combining marks",
                ));
            }
            if !seen.insert(g.as_str()) {
                return Err(ProfileError::at(
                    format!("alphabet[{i}]"),
                    format!("duplicate grapheme {g:?}"),
                ));
            }
        }
        for v in VOWELS {
            if !seen.contains(v.encode_utf8(&mut [0; 4]) as &str) {
                return Err(ProfileError::at("alphabet", format!("missing vowel {v:?}")));
            }
        }

        let mut replacements = std::collections::HashSet::new();
        for (i, (src, rep)) in self.digraphs.iter().enumerate() {
            let path = format!("digraphs[{i}]");
            let len = src.chars().count();
            if !(2..=4).contains(&len) {
                return Err(ProfileError::at(
                    path,
                    format!("source {src:?} must have 2 to 4 code points"),
                ));
            }
            if src
                .chars()
                .any(|c| is_combining_mark(c) || is_private_use(c))
            {
                return Err(ProfileError::at(
                    path,
                    format!("source {src:?} may not contain combining or private-use characters"),
                ));
            }
            if !is_private_use(*rep) {
                return Err(ProfileError::at(
                    path,
                    format!(
                        "replacement U+{:04X} is not a private-use code point",
                        *rep as u32
                    ),
                ));
            }
            if !replacements.insert(*rep) {
                return Err(ProfileError::at(
                    path,
                    format!("replacement U+{:04X} used twice", *rep as u32),
                ));
            }
            for (j, (earlier, _)) in self.digraphs[..i].iter().enumerate() {
                if earlier == src {
                    return Err(ProfileError::at(
                        path,
                        format!("duplicate source {src:?} (first at digraphs[{j}])"),
                    ));
                }
                if src.starts_with(earlier.as_str()) {
                    return Err(ProfileError::at(
                        path,
                        format!("{src:?} must precede its prefix {earlier:?} at digraphs[{j}]"),
                    ));
                }
            }
        }

        let mut marks = BTreeMap::new();
        let mut unmarked = None;
        for (tone, d) in &self.tone_diacritics {
            let path = format!("tone_diacritics.{tone:?}");
            match d {
                Diacritic::Mark(c) => {
                    if !is_combining_mark(*c) {
                        return Err(ProfileError::at(
                            path,
                            format!("U+{:04X} is not a combining mark", *c as u32),
                        ));
                    }
                    if let Some(other) = marks.insert(*c, *tone) {
                        return Err(ProfileError::at(
                            path,
                            format!("U+{:04X} already denotes {other:?}", *c as u32),
                        ));
                    }
                }
                Diacritic::Unmarked => {
                    if let Some(other) = unmarked.replace(*tone) {
                        return Err(ProfileError::at(
                            path,
                            format!("{other:?} is already the unmarked tone"),
                        ));
                    }
                }
            }
        }
        if let Some(tone) = unmarked {
            if tone == ToneMark::Low && !self.allow_unmarked_low {
                return Err(ProfileError::at(
                    "allow_unmarked_low",
                    "must be true when Low is written unmarked",
                ));
            }
        }
        Ok(())
    }

    pub fn tone_for_mark(&self, mark: char) -> Option<ToneMark> {
        self.tone_diacritics
            .iter()
            .find(|(_, d)| **d == Diacritic::Mark(mark))
            .map(|(t, _)| *t)
    }

    /// The combining mark to write for `tone`; `Ok(None)` means the tone is written bare.
    pub fn mark_for_tone(&self, tone: ToneMark) -> Result<Option<char>, ToneError> {
        match self.tone_diacritics.get(&tone) {
            Some(Diacritic::Mark(c)) => Ok(Some(*c)),
            Some(Diacritic::Unmarked) => Ok(None),
            None if tone == ToneMark::Low && self.allow_unmarked_low => Ok(None),
            None => Err(ToneError::UnrepresentableTone {
                tone,
                profile: self.id.clone(),
            }),
        }
    }

    /// Tones this profile can write.
    pub fn representable_tones(&self) -> Vec<ToneMark> {
        ToneMark::ALL
            .into_iter()
            .filter(|t| self.mark_for_tone(*t).is_ok())
            .collect()
    }
}

/// Base text with its tone-bearing units.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TonedText {
    pub base: String,
    /// `(code-point index into base, tone)`, indices strictly increasing.
    pub tones: Vec<(usize, ToneMark)>,
}

impl TonedText {
    pub fn new(base: impl Into<String>, tones: Vec<(usize, ToneMark)>) -> Self {
        TonedText {
            base: base.into(),
            tones,
        }
    }

    /// Checks that tone indices are strictly increasing and land on vowels or nasals.
    pub fn check(&self) -> Result<(), ToneError> {
        let chars: Vec<char> = self.base.chars().collect();
        let mut last = None;
        for &(i, _) in &self.tones {
            if last.is_some_and(|l| i <= l) {
                return Err(ToneError::BadNucleus { index: i });
            }
            match chars.get(i) {
                Some(&c) if is_vowel(c) || is_nasal(c) => {}
                _ => return Err(ToneError::BadNucleus { index: i }),
            }
            last = Some(i);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToneError {
    #[error("combining mark U+{mark:04X} at code point {position} is not a tone diacritic of profile {profile:?}")]
    UnknownDiacritic {
        mark: u32,
        position: usize,
        profile: String,
    },
    #[error("tone diacritic at code point {position} is attached to {base:?}, which is not a vowel or nasal")]
    MarkOnNonNucleus { position: usize, base: Option<char> },
    #[error("more than one tone diacritic on the grapheme at code point {position}")]
    StackedDiacritics { position: usize },
    #[error("profile {profile:?} has no way to write tone {tone:?}")]
    UnrepresentableTone { tone: ToneMark, profile: String },
    #[error("tone index {index} does not point at a vowel or nasal in increasing order")]
    BadNucleus { index: usize },
}

/// Splits decomposed `text` into base graphemes and tones.
pub fn parse_tones(text: &str, profile: &OrthographyProfile) -> Result<TonedText, ToneError> {
    let mut base = String::with_capacity(text.len());
    let mut tones: Vec<(usize, ToneMark)> = Vec::new();
    // (index in base, char) of the most recent base grapheme.
    let mut prev: Option<(usize, char)> = None;
    let mut marked_prev = false;
    let mut count = 0usize;

    for (position, c) in text.chars().enumerate() {
        if is_combining_mark(c) {
            let tone = profile
                .tone_for_mark(c)
                .ok_or_else(|| ToneError::UnknownDiacritic {
                    mark: c as u32,
                    position,
                    profile: profile.id.clone(),
                })?;
            let Some((index, b)) = prev else {
                return Err(ToneError::MarkOnNonNucleus {
                    position,
                    base: None,
                });
            };
            if !(is_vowel(b) || is_nasal(b)) {
                return Err(ToneError::MarkOnNonNucleus {
                    position,
                    base: Some(b),
                });
            }
            if marked_prev {
                return Err(ToneError::StackedDiacritics { position });
            }
            // An unmarked vowel was provisionally given Low; the mark overrides it.
            match tones.last_mut() {
                Some(last) if last.0 == index => last.1 = tone,
                _ => tones.push((index, tone)),
            }
            marked_prev = true;
        } else {
            base.push(c);
            prev = Some((count, c));
            marked_prev = false;
            if profile.allow_unmarked_low && is_vowel(c) {
                tones.push((count, ToneMark::Low));
            }
            count += 1;
        }
    }
    Ok(TonedText { base, tones })
}

/// Writes `toned` with the diacritics of `profile`; inverse of [`parse_tones`].
pub fn render_tones(toned: &TonedText, profile: &OrthographyProfile) -> Result<String, ToneError> {
    let mut out = String::with_capacity(toned.base.len() + 2 * toned.tones.len());
    let mut tones = toned.tones.iter().peekable();
    for (i, c) in toned.base.chars().enumerate() {
        out.push(c);
        if let Some(&&(index, tone)) = tones.peek() {
            if index == i {
                if let Some(mark) = profile.mark_for_tone(tone)? {
                    out.push(mark);
                }
                tones.next();
            }
        }
    }
    if let Some(&&(index, _)) = tones.peek() {
        return Err(ToneError::BadNucleus { index });
    }
    Ok(out)
}
