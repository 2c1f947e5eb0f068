//! Character and word error rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::nfd;

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0usize; short.len() + 1];
    for (i, x) in long.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("references contain no characters or no words")]
    EmptyReference,
}

/// Corpus-level error rates, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cer: f64,
    pub wer: f64,
    pub total_ref_chars: usize,
    pub total_ref_words: usize,
    pub total_char_edits: usize,
    pub total_word_edits: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CER {:.4} ({}/{} chars)  WER {:.4} ({}/{} words)",
            self.cer,
            self.total_char_edits,
            self.total_ref_chars,
            self.wer,
            self.total_word_edits,
            self.total_ref_words
        )
    }
}

/// Per-sentence counts; summing these and dividing gives the micro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SentenceCounts {
    pub ref_chars: usize,
    pub ref_words: usize,
    pub char_edits: usize,
    pub word_edits: usize,
}

pub fn sentence_counts(hypothesis: &str, reference: &str) -> SentenceCounts {
    let h: Vec<char> = nfd(hypothesis).chars().collect();
    let r: Vec<char> = nfd(reference).chars().collect();
    let hw: Vec<&str> = hypothesis.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();
    // Words are compared in decomposed form too.
    let hw: Vec<String> = hw.iter().map(|w| nfd(w)).collect();
    let rw: Vec<String> = rw.iter().map(|w| nfd(w)).collect();
    SentenceCounts {
        ref_chars: r.len(),
        ref_words: rw.len(),
        char_edits: edit_distance(&h, &r),
        word_edits: edit_distance(&hw, &rw),
    }
}

/// Micro-averaged CER and WER over aligned hypothesis/reference lists.
pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
) -> Result<EvalReport, MetricsError> {
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let mut total = SentenceCounts::default();
    for (h, r) in hypotheses.iter().zip(references) {
        let c = sentence_counts(h.as_ref(), r.as_ref());
        total.ref_chars += c.ref_chars;
        total.ref_words += c.ref_words;
        total.char_edits += c.char_edits;
        total.word_edits += c.word_edits;
    }
    if total.ref_chars == 0 || total.ref_words == 0 {
        return Err(MetricsError::EmptyReference);
    }
    Ok(EvalReport {
        cer: 100.0 * total.char_edits as f64 / total.ref_chars as f64,
        wer: 100.0 * total.word_edits as f64 / total.ref_words as f64,
        total_ref_chars: total.ref_chars,
        total_ref_words: total.ref_words,
        total_char_edits: total.char_edits,
        total_word_edits: total.word_edits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance(&chars("abc"), &chars("abc")), 0);
        assert_eq!(edit_distance(&chars(""), &chars("ab")), 2);
        assert_eq!(edit_distance(&chars("kitten"), &chars("sitting")), 3);
    }

    #[test]
    fn identical_corpora_score_zero() {
        let r = evaluate(&["mɛ̀ nlɔ̀ yani"], &["mɛ̀ nlɔ̀ yani"]).unwrap();
        assert_eq!((r.cer, r.wer), (0.0, 0.0));
    }

    #[test]
    fn one_missing_char() {
        let r = evaluate(&["ba"], &["baa"]).unwrap();
        assert_eq!(r.total_char_edits, 1);
        assert_eq!(r.total_ref_chars, 3);
        assert!((r.cer - 33.3333).abs() < 1e-4);
        assert_eq!(format!("{:.4}", r.cer), "33.3333");
    }

    #[test]
    fn wrong_diacritic_is_one_edit() {
        // composed input; compared on decomposed code points
        let r = evaluate(&["kɛ́mbɛ̀"], &["kɛ́mbɛ̂"]).unwrap();
        assert_eq!(r.total_char_edits, 1);
        assert_eq!(r.total_ref_chars, 7);
        assert_eq!(r.total_word_edits, 1);
    }

    #[test]
    fn wer_can_exceed_one_hundred() {
        let r = evaluate(&["a b c d"], &["x"]).unwrap();
        assert_eq!(r.wer, 400.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            evaluate(&["a"], &["a", "b"]),
            Err(MetricsError::LengthMismatch {
                hypotheses: 1,
                references: 2
            })
        );
        assert_eq!(evaluate(&[""], &[""]), Err(MetricsError::EmptyReference));
        assert_eq!(
            evaluate::<&str, &str>(&[], &[]),
            Err(MetricsError::EmptyReference)
        );
    }

    proptest! {
        #[test]
        fn metric_axioms(a in "[abc]{0,10}", b in "[abc]{0,10}", c in "[abc]{0,10}") {
            let (a, b, c) = (chars(&a), chars(&b), chars(&c));
            prop_assert_eq!(edit_distance(&a, &a), 0);
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            prop_assert!(edit_distance(&a, &b) <= a.len().max(b.len()));
        }

        #[test]
        fn order_invariance(pairs in proptest::collection::vec(("[ab ]{0,6}", "[ab]{1,6}"), 1..8)) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let forward = evaluate(&h, &r).unwrap();
            let (hr, rr): (Vec<String>, Vec<String>) = pairs.iter().rev().cloned().unzip();
            let backward = evaluate(&hr, &rr).unwrap();
            prop_assert_eq!(forward, backward);
        }
    }
}
