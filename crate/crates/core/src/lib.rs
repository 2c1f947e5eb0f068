//! Orthography conversion for a tonal language with several spelling systems.
//!
//! The crate covers the whole pipeline: tone-aware parsing of decomposed text
//! ([`text`]), reversible digraph unification ([`normalize`]), a rule-based
//! converter with High Tone Spreading ([`rules`]), an edit-tag converter
//! ([`tagger`]), a character-level encoder-decoder ([`seq2seq`]), CER/WER
//! scoring ([`metrics`]) and corpus handling ([`corpus`]). [`pipeline`] wires
//! them into one reproducible experiment.

pub mod builtin;
pub mod corpus;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod rules;
pub mod seq2seq;
pub mod tagger;
pub mod text;
