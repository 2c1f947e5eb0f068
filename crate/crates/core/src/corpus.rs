//! Parallel corpora: TSV ingestion, seeded splits and a synthetic generator.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rules::{ConvertError, Converter, RuleSet};
use crate::text::{
    is_nasal, is_vowel, nfc, nfd, render_tones, Diacritic, OrthographyProfile, ToneMark, TonedText,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: String,
    pub target: String,
    pub split: Option<Split>,
    /// 1-based line in the file this example came from, 0 if generated.
    pub line: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: line {line}: {message}")]
    MalformedLine {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: line {line}: invalid UTF-8")]
    EncodingError { file: String, line: usize },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
    #[error("requested {requested} examples but the corpus has {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("example {index}: {message}")]
    Unwritable { index: usize, message: String },
    #[error("noise ratio {0} is outside [0, 1]")]
    BadNoise(f64),
    #[error(transparent)]
    Convert(#[from] ConvertError),
}

/// Aligned sentence pairs, all text in canonical decomposed form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub examples: Vec<Example>,
}

impl ParallelCorpus {
    /// Pairs without split labels. Targets must be non-empty.
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(pairs: &[(S, T)]) -> Self {
        ParallelCorpus {
            examples: pairs
                .iter()
                .map(|(s, t)| Example {
                    source: nfd(s.as_ref()),
                    target: nfd(t.as_ref()),
                    split: None,
                    line: 0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.examples.iter().any(|e| e.split.is_some())
    }

    /// Examples carrying `split`.
    pub fn part(&self, split: Split) -> ParallelCorpus {
        ParallelCorpus {
            examples: self
                .examples
                .iter()
                .filter(|e| e.split == Some(split))
                .cloned()
                .collect(),
        }
    }

    pub fn sources(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.source.as_str()).collect()
    }

    pub fn targets(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.target.as_str()).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.examples
            .iter()
            .filter(|e| e.split == Some(split))
            .count()
    }

    /// Parses TSV bytes: `source<TAB>target[<TAB>split]` per line.
    pub fn parse_tsv(bytes: &[u8], file: &str) -> Result<Self, CorpusError> {
        let mut examples = Vec::new();
        if bytes.is_empty() {
            return Ok(ParallelCorpus { examples });
        }
        let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
        for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let text = std::str::from_utf8(raw).map_err(|_| CorpusError::EncodingError {
                file: file.to_string(),
                line,
            })?;
            let malformed = |message: String| CorpusError::MalformedLine {
                file: file.to_string(),
                line,
                message,
            };
            let fields: Vec<&str> = text.split('\t').collect();
            let (source, target, split) = match fields.as_slice() {
                [s, t] => (*s, *t, None),
                [s, t, label] => (*s, *t, Some(label.parse::<Split>().map_err(malformed)?)),
                [_] => return Err(malformed("expected source<TAB>target, found no TAB".into())),
                _ => {
                    return Err(malformed(format!(
                        "expected 2 or 3 TAB-separated fields, found {}",
                        fields.len()
                    )))
                }
            };
            if target.is_empty() {
                return Err(malformed("empty target".into()));
            }
            examples.push(Example {
                source: nfd(source),
                target: nfd(target),
                split,
                line,
            });
        }
        Ok(ParallelCorpus { examples })
    }

    /// TSV text in composed form; labels are written when present.
    pub fn to_tsv(&self) -> Result<String, CorpusError> {
        let mut out = String::new();
        for (index, e) in self.examples.iter().enumerate() {
            for field in [&e.source, &e.target] {
                if field.contains(['\t', '\n', '\r']) {
                    return Err(CorpusError::Unwritable {
                        index,
                        message: "TAB or newline inside a sentence".into(),
                    });
                }
            }
            if e.target.is_empty() {
                return Err(CorpusError::Unwritable {
                    index,
                    message: "empty target".into(),
                });
            }
            out.push_str(&nfc(&e.source));
            out.push('\t');
            out.push_str(&nfc(&e.target));
            if let Some(split) = e.split {
                out.push('\t');
                out.push_str(split.as_str());
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn load_parallel(path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let file = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| CorpusError::Io {
        file: file.clone(),
        message: e.to_string(),
    })?;
    ParallelCorpus::parse_tsv(&bytes, &file)
}

pub fn save_parallel(corpus: &ParallelCorpus, path: &Path) -> Result<(), CorpusError> {
    let tsv = corpus.to_tsv()?;
    std::fs::write(path, tsv).map_err(|e| CorpusError::Io {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Shuffles with `seed` and labels the first `n_train`, next `n_valid` and
/// next `n_test` examples. Examples left over are dropped; the rest keep
/// their original order.
pub fn split(
    corpus: &ParallelCorpus,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<ParallelCorpus, CorpusError> {
    let (n_train, n_valid, n_test) = sizes;
    let requested = n_train + n_valid + n_test;
    if requested > corpus.len() {
        return Err(CorpusError::InsufficientData {
            requested,
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![None; corpus.len()];
    for (rank, &idx) in order.iter().enumerate().take(requested) {
        labels[idx] = Some(if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        });
    }
    let examples = corpus
        .examples
        .iter()
        .zip(labels)
        .filter_map(|(e, label)| {
            label.map(|split| Example {
                split: Some(split),
                ..e.clone()
            })
        })
        .collect();
    Ok(ParallelCorpus { examples })
}

/// Shape of generated sentences.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticShape {
    pub min_words: usize,
    pub max_words: usize,
    pub max_syllables: usize,
    /// Probability that a word starts with a tone-bearing syllabic nasal.
    pub syllabic_nasal: f64,
    pub onset: f64,
    pub coda: f64,
}

impl Default for SyntheticShape {
    fn default() -> Self {
        SyntheticShape {
            min_words: 1,
            max_words: 3,
            max_syllables: 3,
            syllabic_nasal: 0.15,
            onset: 0.9,
            coda: 0.2,
        }
    }
}

const NOISE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Generates `n` source sentences in the source orthography and converts
/// them with `rules`; a `noise` fraction of targets then gets one random
/// character edit.
pub fn generate_synthetic(
    source: &OrthographyProfile,
    target: &OrthographyProfile,
    rules: &RuleSet,
    n: usize,
    seed: u64,
    noise: f64,
) -> Result<ParallelCorpus, CorpusError> {
    generate_synthetic_with(
        source,
        target,
        rules,
        n,
        seed,
        noise,
        SyntheticShape::default(),
    )
}

pub fn generate_synthetic_with(
    source: &OrthographyProfile,
    target: &OrthographyProfile,
    rules: &RuleSet,
    n: usize,
    seed: u64,
    noise: f64,
    shape: SyntheticShape,
) -> Result<ParallelCorpus, CorpusError> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(CorpusError::BadNoise(noise));
    }
    let converter = Converter::new(rules, source, target)?;
    let sampler = SourceSampler::new(source, shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let src = sampler.sentence(&mut rng);
        let tgt = converter.convert_sentence(&src, examples.len() + 1)?;
        examples.push(Example {
            source: src,
            target: tgt,
            split: None,
            line: 0,
        });
    }

    let noisy = (noise * n as f64).round() as usize;
    if noisy > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let letters: Vec<char> = target
            .alphabet
            .iter()
            .filter_map(|g| {
                let mut it = g.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            })
            .collect();
        let mut picked = order[..noisy].to_vec();
        picked.sort_unstable();
        for idx in picked {
            let t = &mut examples[idx].target;
            *t = perturb(t, &letters, &mut rng);
        }
    }
    Ok(ParallelCorpus { examples })
}

/// Applies exactly one character substitution, insertion or deletion.
fn perturb(text: &str, letters: &[char], rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    loop {
        let op = if chars.len() <= 1 {
            rng.random_range(0..2)
        } else {
            rng.random_range(0..3)
        };
        let letter = letters[rng.random_range(0..letters.len())];
        match op {
            0 => {
                let at = rng.random_range(0..chars.len());
                if chars[at] == letter || chars[at].is_whitespace() {
                    continue;
                }
                chars[at] = letter;
            }
            1 => {
                let at = rng.random_range(0..=chars.len());
                chars.insert(at, letter);
            }
            _ => {
                let at = rng.random_range(0..chars.len());
                if chars[at].is_whitespace() {
                    continue;
                }
                chars.remove(at);
            }
        }
        return chars.into_iter().collect();
    }
}

/// Syllable-structured sentence sampler for one orthography.
struct SourceSampler {
    profile: OrthographyProfile,
    shape: SyntheticShape,
    onsets: Vec<String>,
    vowels: Vec<char>,
    codas: Vec<char>,
    nasals: Vec<char>,
    tones: Vec<ToneMark>,
    nasal_tones: Vec<ToneMark>,
}

impl SourceSampler {
    fn new(profile: &OrthographyProfile, shape: SyntheticShape) -> Self {
        let single = |g: &String| {
            let mut it = g.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            }
        };
        let vowels: Vec<char> = profile
            .alphabet
            .iter()
            .filter_map(single)
            .filter(|c| is_vowel(*c))
            .collect();
        let mut onsets: Vec<String> = profile
            .alphabet
            .iter()
            .filter(|g| !g.chars().next().is_some_and(is_vowel))
            .cloned()
            .collect();
        for (d, _) in &profile.digraphs {
            if !onsets.contains(d) {
                onsets.push(d.clone());
            }
        }
        let nasals: Vec<char> = profile
            .alphabet
            .iter()
            .filter_map(single)
            .filter(|c| is_nasal(*c))
            .collect();
        let tones = profile.representable_tones();
        // A syllabic nasal is only recognizable when it carries a visible mark.
        let nasal_tones = tones
            .iter()
            .copied()
            .filter(|t| matches!(profile.tone_diacritics.get(t), Some(Diacritic::Mark(_))))
            .collect();
        SourceSampler {
            profile: profile.clone(),
            shape,
            onsets,
            vowels,
            codas: nasals.clone(),
            nasals,
            tones,
            nasal_tones,
        }
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let words = rng.random_range(self.shape.min_words..=self.shape.max_words);
        let mut toned = TonedText::default();
        let mut len = 0usize;
        let push = |toned: &mut TonedText, len: &mut usize, s: &str| {
            toned.base.push_str(s);
            *len += s.chars().count();
        };
        for w in 0..words {
            if w > 0 {
                push(&mut toned, &mut len, " ");
            }
            if !self.nasals.is_empty()
                && !self.nasal_tones.is_empty()
                && rng.random_bool(self.shape.syllabic_nasal)
            {
                let nasal = self.nasals[rng.random_range(0..self.nasals.len())];
                let tone = self.nasal_tones[rng.random_range(0..self.nasal_tones.len())];
                toned.tones.push((len, tone));
                push(&mut toned, &mut len, nasal.encode_utf8(&mut [0; 4]));
                let onset = &self.onsets[rng.random_range(0..self.onsets.len())];
                push(&mut toned, &mut len, onset);
            } else if rng.random_bool(self.shape.onset) {
                let onset = &self.onsets[rng.random_range(0..self.onsets.len())];
                push(&mut toned, &mut len, onset);
            }
            let syllables = rng.random_range(1..=self.shape.max_syllables);
            for s in 0..syllables {
                if s > 0 {
                    let onset = &self.onsets[rng.random_range(0..self.onsets.len())];
                    push(&mut toned, &mut len, onset);
                }
                let vowel = self.vowels[rng.random_range(0..self.vowels.len())];
                let tone = self.tones[rng.random_range(0..self.tones.len())];
                toned.tones.push((len, tone));
                push(&mut toned, &mut len, vowel.encode_utf8(&mut [0; 4]));
                if !self.codas.is_empty() && rng.random_bool(self.shape.coda) {
                    let coda = self.codas[rng.random_range(0..self.codas.len())];
                    push(&mut toned, &mut len, coda.encode_utf8(&mut [0; 4]));
                }
            }
        }
        render_tones(&toned, &self.profile).expect("sampled tones are representable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::metrics::evaluate;

    fn pair_generate(n: usize, seed: u64, noise: f64) -> ParallelCorpus {
        generate_synthetic(
            &builtin::catholic_profile(),
            &builtin::official_profile(),
            &builtin::catholic_to_official_rules(),
            n,
            seed,
            noise,
        )
        .unwrap()
    }

    #[test]
    fn loads_three_lines() {
        let c = ParallelCorpus::parse_tsv("a\tb\nc\td\ne\tf\n".as_bytes(), "x.tsv").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.examples[2].line, 3);
        assert_eq!(c.examples[1].target, "d");
    }

    #[test]
    fn missing_tab_names_the_line() {
        let err = ParallelCorpus::parse_tsv(b"a\tb\nno tab here\n", "x.tsv").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }));
        assert!(err.to_string().contains("x.tsv: line 2"));
    }

    #[test]
    fn empty_target_is_rejected() {
        let err = ParallelCorpus::parse_tsv(b"a\t\n", "x.tsv").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn invalid_utf8_names_the_line() {
        let err = ParallelCorpus::parse_tsv(b"a\tb\n\xff\tb\n", "x.tsv").unwrap_err();
        assert!(matches!(err, CorpusError::EncodingError { line: 2, .. }));
    }

    #[test]
    fn load_decomposes() {
        let c = ParallelCorpus::parse_tsv("kɛ́\tkɛ́\n".as_bytes(), "x").unwrap();
        assert_eq!(c.examples[0].source, "k\u{025B}\u{0301}");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let c = split(&pair_generate(40, 3, 0.0), (30, 5, 5), 1).unwrap();
        save_parallel(&c, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = load_parallel(&path).unwrap();
        let mut expected = c.clone();
        for (i, e) in expected.examples.iter_mut().enumerate() {
            e.line = i + 1;
        }
        assert_eq!(back, expected);
        save_parallel(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn tab_inside_sentence_cannot_be_saved() {
        let c = ParallelCorpus::from_pairs(&[("a\tb", "c")]);
        assert!(matches!(
            c.to_tsv(),
            Err(CorpusError::Unwritable { index: 0, .. })
        ));
    }

    #[test]
    fn ten_to_one_split_shape() {
        let c = ParallelCorpus::from_pairs(
            &(0..12_000)
                .map(|i| (i.to_string(), "x".to_string()))
                .collect::<Vec<_>>(),
        );
        let s = split(&c, (10_000, 1_000, 1_000), 7).unwrap();
        assert_eq!(s.count(Split::Train), 10_000);
        assert_eq!(s.count(Split::Valid), 1_000);
        assert_eq!(s.count(Split::Test), 1_000);
        assert_eq!(s, split(&c, (10_000, 1_000, 1_000), 7).unwrap());
        assert_ne!(s, split(&c, (10_000, 1_000, 1_000), 8).unwrap());
    }

    #[test]
    fn single_example_split() {
        let c = ParallelCorpus::from_pairs(&[("a", "b")]);
        let s = split(&c, (1, 0, 0), 0).unwrap();
        assert_eq!(s.examples[0].split, Some(Split::Train));
    }

    #[test]
    fn split_needs_enough_data() {
        let c = ParallelCorpus::from_pairs(&[("a", "b")]);
        assert!(matches!(
            split(&c, (1, 1, 0), 0),
            Err(CorpusError::InsufficientData {
                requested: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn leftovers_are_dropped() {
        let c = ParallelCorpus::from_pairs(&[("a", "b"), ("c", "d"), ("e", "f")]);
        let s = split(&c, (1, 0, 1), 0).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn generator_basics() {
        assert!(pair_generate(0, 1, 0.0).is_empty());
        let a = pair_generate(200, 11, 0.0);
        assert_eq!(a, pair_generate(200, 11, 0.0));
        assert_ne!(a, pair_generate(200, 12, 0.0));
        assert!(a.examples.iter().all(|e| !e.target.is_empty()));
        // exercises digraphs and diacritics
        let text: String = a.sources().concat();
        assert!(text.contains("mb") || text.contains("nd") || text.contains("ng"));
        assert!(text.contains('\u{0301}') && text.contains('\u{0306}'));
    }

    #[test]
    fn noiseless_corpus_is_reproduced_by_the_rules() {
        let c = pair_generate(300, 5, 0.0);
        let conv = Converter::new(
            &builtin::catholic_to_official_rules(),
            &builtin::catholic_profile(),
            &builtin::official_profile(),
        )
        .unwrap();
        let hyp = conv.convert_all(&c.sources()).unwrap();
        let r = evaluate(&hyp, &c.targets()).unwrap();
        assert_eq!((r.cer, r.wer), (0.0, 0.0));
    }

    #[test]
    fn noise_perturbs_exactly_the_requested_fraction() {
        let clean = pair_generate(100, 5, 0.0);
        let noisy = pair_generate(100, 5, 0.3);
        assert_eq!(clean.sources(), noisy.sources());
        let changed = clean
            .examples
            .iter()
            .zip(&noisy.examples)
            .filter(|(a, b)| a.target != b.target)
            .count();
        assert_eq!(changed, 30);
        for (a, b) in clean.examples.iter().zip(&noisy.examples) {
            let a: Vec<char> = a.target.chars().collect();
            let b: Vec<char> = b.target.chars().collect();
            assert!(crate::metrics::edit_distance(&a, &b) <= 1);
        }
    }

    #[test]
    fn bad_noise_ratio() {
        let r = generate_synthetic(
            &builtin::catholic_profile(),
            &builtin::official_profile(),
            &builtin::catholic_to_official_rules(),
            1,
            0,
            1.5,
        );
        assert!(matches!(r, Err(CorpusError::BadNoise(_))));
    }
}
