//! Built-in profiles and rules used by the synthetic experiments.
//!
//! `official` follows the common Africanist convention (acute, grave,
//! circumflex, caron) and writes Low explicitly with a grave. `catholic` is a
//! stand-in for a missionary orthography: Low is left unmarked, the rising
//! tone is written with a breve, and a few consonants are spelled differently.

use std::collections::BTreeMap;

use crate::rules::RuleSet;
use crate::text::{
    Diacritic, OrthographyProfile, ToneMark, COMBINING_ACUTE, COMBINING_CARON,
    COMBINING_CIRCUMFLEX, COMBINING_GRAVE,
};

const COMBINING_BREVE: char = '\u{0306}';

/// Prenasalized stops and the palatal nasal.
pub const DEFAULT_DIGRAPHS: [&str; 4] = ["mb", "nd", "ng", "ny"];

fn graphemes(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn official_profile() -> OrthographyProfile {
    OrthographyProfile {
        id: "official".into(),
        alphabet: graphemes(&[
            "a", "b", "c", "d", "e", "ɛ", "g", "h", "i", "j", "k", "l", "m", "n", "ŋ", "o", "ɔ",
            "p", "s", "t", "u", "w", "y",
        ]),
        digraphs: OrthographyProfile::assign_digraphs(&DEFAULT_DIGRAPHS),
        tone_diacritics: BTreeMap::from([
            (ToneMark::High, Diacritic::Mark(COMBINING_ACUTE)),
            (ToneMark::Low, Diacritic::Mark(COMBINING_GRAVE)),
            (ToneMark::Falling, Diacritic::Mark(COMBINING_CIRCUMFLEX)),
            (ToneMark::Rising, Diacritic::Mark(COMBINING_CARON)),
        ]),
        allow_unmarked_low: true,
    }
}

pub fn catholic_profile() -> OrthographyProfile {
    OrthographyProfile {
        id: "catholic".into(),
        alphabet: graphemes(&[
            "a", "b", "ɓ", "d", "dj", "e", "ɛ", "h", "i", "k", "l", "m", "n", "ŋ", "o", "ɔ", "p",
            "s", "t", "ty", "u", "w", "y",
        ]),
        digraphs: OrthographyProfile::assign_digraphs(&DEFAULT_DIGRAPHS),
        tone_diacritics: BTreeMap::from([
            (ToneMark::High, Diacritic::Mark(COMBINING_ACUTE)),
            (ToneMark::Low, Diacritic::Unmarked),
            (ToneMark::Falling, Diacritic::Mark(COMBINING_CIRCUMFLEX)),
            (ToneMark::Rising, Diacritic::Mark(COMBINING_BREVE)),
        ]),
        allow_unmarked_low: true,
    }
}

/// Catholic to official spelling rules, with tone spreading enabled.
pub fn catholic_to_official_rules() -> RuleSet {
    RuleSet::new(
        "catholic",
        "official",
        vec![
            ("ty".into(), "c".into()),
            ("dj".into(), "j".into()),
            ("ɓ".into(), "b".into()),
        ],
        true,
    )
    .expect("built-in rules are valid")
}

pub fn profile(id: &str) -> Option<OrthographyProfile> {
    match id {
        "official" => Some(official_profile()),
        "catholic" => Some(catholic_profile()),
        _ => None,
    }
}

pub fn rules(id: &str) -> Option<RuleSet> {
    match id {
        "catholic-official" => Some(catholic_to_official_rules()),
        _ => None,
    }
}
