//! Edit-tag converter: each source token gets transformation tags that, once
//! applied, turn the source sentence into the target.
//!
//! Tags are derived from a minimal token alignment, conflicts are resolved by
//! dropping `KEEP` next to a content tag, and a predictor can be applied
//! repeatedly until it proposes no more edits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Virtual sentence-start token; insertions before the first word attach to it.
pub const START: &str = "$START";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditTag {
    Keep,
    Delete,
    Replace(String),
    Append(String),
    MergeHyphen,
}

impl EditTag {
    fn is_content(&self) -> bool {
        matches!(self, EditTag::Replace(_) | EditTag::Delete)
    }

    fn rank(&self) -> u8 {
        match self {
            EditTag::Keep | EditTag::Delete | EditTag::Replace(_) => 0,
            EditTag::MergeHyphen => 1,
            EditTag::Append(_) => 2,
        }
    }
}

impl fmt::Display for EditTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditTag::Keep => f.write_str("KEEP"),
            EditTag::Delete => f.write_str("DELETE"),
            EditTag::Replace(t) => write!(f, "REPLACE_{t}"),
            EditTag::Append(t) => write!(f, "APPEND_{t}"),
            EditTag::MergeHyphen => f.write_str("MERGE_HYPHEN"),
        }
    }
}

impl FromStr for EditTag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, TagError> {
        let payload = |p: &str| {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                Err(TagError::BadTag(s.to_string()))
            } else {
                Ok(p.to_string())
            }
        };
        match s {
            "KEEP" => Ok(EditTag::Keep),
            "DELETE" => Ok(EditTag::Delete),
            "MERGE_HYPHEN" => Ok(EditTag::MergeHyphen),
            _ => {
                if let Some(p) = s.strip_prefix("REPLACE_") {
                    Ok(EditTag::Replace(payload(p)?))
                } else if let Some(p) = s.strip_prefix("APPEND_") {
                    Ok(EditTag::Append(payload(p)?))
                } else {
                    Err(TagError::BadTag(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagError {
    #[error("MERGE_HYPHEN on token {index} has no following token to merge with")]
    DanglingMerge { index: usize },
    #[error("{tokens} tokens but {tag_lists} tag lists")]
    LengthMismatch { tokens: usize, tag_lists: usize },
    #[error("token {index} has no tags")]
    EmptyTagList { index: usize },
    #[error("token {index} has conflicting tags: {tags}")]
    Unresolved { index: usize, tags: String },
    #[error("unrecognized tag {0:?}")]
    BadTag(String),
    #[error("line {line}: {message}")]
    BadTsv { line: usize, message: String },
}

/// Source tokens (starting with [`START`]) with one tag list per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<Vec<EditTag>>,
}

impl TaggedSentence {
    /// Whether every token is tagged `KEEP` only.
    pub fn is_all_keep(&self) -> bool {
        self.tags
            .iter()
            .all(|t| t.iter().all(|x| *x == EditTag::Keep))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { src: usize, tgt: usize },
    Substitute { src: usize, tgt: usize },
    Delete { src: usize },
    Insert { tgt: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub cost: usize,
}

/// Minimal unit-cost token alignment.
///
/// Among optimal scripts, the one read off from the start of both sequences
/// preferring match, then substitution, deletion and insertion is returned.
pub fn align<S: AsRef<str>, T: AsRef<str>>(source: &[S], target: &[T]) -> Alignment {
    align_by(source.len(), target.len(), |i, j| {
        source[i].as_ref() == target[j].as_ref()
    })
}

fn align_by(n: usize, m: usize, eq: impl Fn(usize, usize) -> bool) -> Alignment {
    // rest[i][j]: distance between source[i..] and target[j..]
    let w = m + 1;
    let mut rest = vec![0usize; (n + 1) * w];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            rest[i * w + j] = if i == n {
                m - j
            } else if j == m {
                n - i
            } else {
                let diag = rest[(i + 1) * w + j + 1] + usize::from(!eq(i, j));
                diag.min(rest[(i + 1) * w + j] + 1)
                    .min(rest[i * w + j + 1] + 1)
            };
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = rest[i * w + j];
        if i < n && j < m && eq(i, j) && here == rest[(i + 1) * w + j + 1] {
            ops.push(EditOp::Match { src: i, tgt: j });
            i += 1;
            j += 1;
        } else if i < n && j < m && here == rest[(i + 1) * w + j + 1] + 1 {
            ops.push(EditOp::Substitute { src: i, tgt: j });
            i += 1;
            j += 1;
        } else if i < n && here == rest[(i + 1) * w + j] + 1 {
            ops.push(EditOp::Delete { src: i });
            i += 1;
        } else {
            ops.push(EditOp::Insert { tgt: j });
            j += 1;
        }
    }
    Alignment { ops, cost: rest[0] }
}

/// A target token, or one hyphen-separated part of it.
#[derive(Debug, Clone)]
struct Piece {
    text: String,
    /// Joined to the next piece with "-".
    joins_next: bool,
    /// Index of the target token this piece belongs to.
    token: usize,
}

fn pieces(target: &[String], atomic: &[bool]) -> Vec<Piece> {
    let mut out = Vec::new();
    for (token, t) in target.iter().enumerate() {
        let parts: Vec<&str> = t.split('-').collect();
        if atomic[token] || parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
            out.push(Piece {
                text: t.clone(),
                joins_next: false,
                token,
            });
        } else {
            let last = parts.len() - 1;
            for (k, p) in parts.into_iter().enumerate() {
                out.push(Piece {
                    text: p.to_string(),
                    joins_next: k < last,
                    token,
                });
            }
        }
    }
    out
}

/// Drops `KEEP` next to other tags and orders the list content, merge, appends.
pub fn resolve_conflicts(tags: &[EditTag]) -> Vec<EditTag> {
    let mut out: Vec<EditTag> = Vec::with_capacity(tags.len());
    let mut content = None;
    for t in tags {
        match t {
            EditTag::Keep => {}
            EditTag::Delete | EditTag::Replace(_) => {
                content.get_or_insert_with(|| t.clone());
            }
            EditTag::MergeHyphen => {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
            EditTag::Append(_) => out.push(t.clone()),
        }
    }
    if let Some(c) = content {
        out.insert(0, c);
    }
    if out.is_empty() {
        out.push(EditTag::Keep);
    }
    out.sort_by_key(EditTag::rank);
    out
}

/// Tags that turn `source` into `target`.
pub fn derive_tags<S: AsRef<str>, T: AsRef<str>>(source: &[S], target: &[T]) -> TaggedSentence {
    let source: Vec<String> = source.iter().map(|s| s.as_ref().to_string()).collect();
    let target: Vec<String> = target.iter().map(|s| s.as_ref().to_string()).collect();
    let mut atomic = vec![false; target.len()];
    loop {
        let pieces = pieces(&target, &atomic);
        let alignment = align_by(source.len(), pieces.len(), |i, j| {
            source[i] == pieces[j].text
        });

        // A compound can only be rebuilt by merging if every part comes from a source token.
        let mut broken = false;
        for op in &alignment.ops {
            if let EditOp::Insert { tgt } = *op {
                let p = &pieces[tgt];
                let compound = pieces.iter().filter(|q| q.token == p.token).count() > 1;
                if compound {
                    atomic[p.token] = true;
                    broken = true;
                }
            }
        }
        if broken {
            continue;
        }

        let mut raw: Vec<Vec<EditTag>> = vec![Vec::new(); source.len() + 1];
        let mut last = 0usize;
        for op in &alignment.ops {
            match *op {
                EditOp::Match { src, tgt } | EditOp::Substitute { src, tgt } => {
                    let slot = &mut raw[src + 1];
                    if matches!(op, EditOp::Match { .. }) {
                        slot.push(EditTag::Keep);
                    } else {
                        slot.push(EditTag::Replace(pieces[tgt].text.clone()));
                    }
                    if pieces[tgt].joins_next {
                        slot.push(EditTag::MergeHyphen);
                    }
                    last = src + 1;
                }
                EditOp::Delete { src } => {
                    raw[src + 1].push(EditTag::Delete);
                    last = src + 1;
                }
                EditOp::Insert { tgt } => raw[last].push(EditTag::Append(pieces[tgt].text.clone())),
            }
        }
        let mut tokens = Vec::with_capacity(source.len() + 1);
        tokens.push(START.to_string());
        tokens.extend(source.iter().cloned());
        let tags = raw.iter().map(|t| resolve_conflicts(t)).collect();
        return TaggedSentence { tokens, tags };
    }
}

fn check_resolved(index: usize, tags: &[EditTag]) -> Result<(), TagError> {
    if tags.is_empty() {
        return Err(TagError::EmptyTagList { index });
    }
    let content = tags.iter().filter(|t| t.is_content()).count();
    let keep = tags.iter().filter(|t| **t == EditTag::Keep).count();
    let merge = tags.iter().filter(|t| **t == EditTag::MergeHyphen).count();
    let deleted = tags.contains(&EditTag::Delete);
    let start_merge = index == 0 && merge > 0;
    let start_content = index == 0 && content > 0;
    if content > 1
        || (keep > 0 && tags.len() > 1)
        || merge > 1
        || (deleted && merge > 0)
        || start_merge
        || start_content
    {
        let joined: Vec<String> = tags.iter().map(ToString::to_string).collect();
        return Err(TagError::Unresolved {
            index,
            tags: joined.join(";"),
        });
    }
    Ok(())
}

/// Realizes the tags left to right; the start token is dropped from the output.
pub fn apply_tags(sentence: &TaggedSentence) -> Result<Vec<String>, TagError> {
    if sentence.tokens.len() != sentence.tags.len() {
        return Err(TagError::LengthMismatch {
            tokens: sentence.tokens.len(),
            tag_lists: sentence.tags.len(),
        });
    }
    let mut out: Vec<String> = Vec::with_capacity(sentence.tokens.len());
    let mut pending: Option<usize> = None;
    let mut emit = |piece: &str, pending: &mut Option<usize>| {
        if pending.take().is_some() {
            let last = out.last_mut().expect("a merge follows an emitted token");
            last.push('-');
            last.push_str(piece);
        } else {
            out.push(piece.to_string());
        }
    };
    let last_index = sentence.tokens.len().saturating_sub(1);
    for (index, (token, tags)) in sentence.tokens.iter().zip(&sentence.tags).enumerate() {
        check_resolved(index, tags)?;
        if tags.contains(&EditTag::MergeHyphen) && index == last_index {
            return Err(TagError::DanglingMerge { index });
        }
        if index > 0 {
            match tags.iter().find(|t| t.is_content()) {
                Some(EditTag::Replace(t)) => emit(t, &mut pending),
                Some(_) => {}
                None => emit(token, &mut pending),
            }
        }
        if tags.contains(&EditTag::MergeHyphen) {
            pending = Some(index);
        }
        for t in tags {
            if let EditTag::Append(a) = t {
                emit(a, &mut pending);
            }
        }
    }
    if let Some(index) = pending {
        return Err(TagError::DanglingMerge { index });
    }
    Ok(out)
}

/// Proposes tags for a token sequence that starts with [`START`].
pub trait TagPredictor {
    fn predict(&self, tokens: &[String]) -> Vec<Vec<EditTag>>;
}

/// Proposes no edits.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeepPredictor;

impl TagPredictor for KeepPredictor {
    fn predict(&self, tokens: &[String]) -> Vec<Vec<EditTag>> {
        vec![vec![EditTag::Keep]; tokens.len()]
    }
}

/// Derives tags against a known target; used to test the iteration loop.
#[derive(Debug, Clone)]
pub struct GoldPredictor {
    pub target: Vec<String>,
}

impl TagPredictor for GoldPredictor {
    fn predict(&self, tokens: &[String]) -> Vec<Vec<EditTag>> {
        derive_tags(&tokens[1..], &self.target).tags
    }
}

/// Predicts, for each token, the tag list most often derived for it in training.
#[derive(Debug, Clone, Default)]
pub struct UnigramPredictor {
    best: HashMap<String, Vec<EditTag>>,
}

impl UnigramPredictor {
    pub fn train<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)]) -> Self {
        let mut counts: HashMap<String, BTreeMap<Vec<EditTag>, usize>> = HashMap::new();
        for (src, tgt) in pairs {
            let tagged = derive_tags(src, tgt);
            for (tok, tags) in tagged.tokens.into_iter().zip(tagged.tags) {
                *counts.entry(tok).or_default().entry(tags).or_default() += 1;
            }
        }
        let best = counts
            .into_iter()
            .map(|(tok, by_tags)| {
                // highest count; ties go to the smallest tag list
                let (tags, _) = by_tags
                    .into_iter()
                    .fold(None::<(Vec<EditTag>, usize)>, |acc, (tags, n)| match acc {
                        Some((t, m)) if m >= n => Some((t, m)),
                        _ => Some((tags, n)),
                    })
                    .expect("at least one observation");
                (tok, tags)
            })
            .collect();
        UnigramPredictor { best }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.best.len()
    }
}

impl TagPredictor for UnigramPredictor {
    fn predict(&self, tokens: &[String]) -> Vec<Vec<EditTag>> {
        let n = tokens.len();
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| match self.best.get(t) {
                // a merge needs a successor
                Some(tags) if !(i + 1 == n && tags.contains(&EditTag::MergeHyphen)) => tags.clone(),
                _ => vec![EditTag::Keep],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterateOutcome {
    pub tokens: Vec<String>,
    /// Editing passes performed (at least 1).
    pub iterations: usize,
    /// False when edits were still being proposed after `max_iters` passes.
    pub converged: bool,
}

/// Predicts and applies tags until the predictor proposes only `KEEP` or
/// `max_iters` editing passes have run. The final no-edit check does not
/// count as a pass.
pub fn iterate<S: AsRef<str>>(
    source: &[S],
    predictor: &dyn TagPredictor,
    max_iters: usize,
) -> Result<IterateOutcome, TagError> {
    let max_iters = max_iters.max(1);
    let mut tokens: Vec<String> = Vec::with_capacity(source.len() + 1);
    tokens.push(START.to_string());
    tokens.extend(source.iter().map(|s| s.as_ref().to_string()));
    let mut passes = 0;
    loop {
        let tags: Vec<Vec<EditTag>> = predictor
            .predict(&tokens)
            .iter()
            .map(|t| resolve_conflicts(t))
            .collect();
        let sentence = TaggedSentence { tokens, tags };
        if sentence.is_all_keep() {
            return Ok(IterateOutcome {
                tokens: sentence.tokens[1..].to_vec(),
                iterations: passes.max(1),
                converged: true,
            });
        }
        if passes == max_iters {
            return Ok(IterateOutcome {
                tokens: sentence.tokens[1..].to_vec(),
                iterations: passes,
                converged: false,
            });
        }
        let next = apply_tags(&sentence)?;
        passes += 1;
        tokens = Vec::with_capacity(next.len() + 1);
        tokens.push(START.to_string());
        tokens.extend(next);
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace(';', "\\;")
}

fn split_escaped(s: &str) -> Vec<String> {
    let mut parts = vec![String::new()];
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(n) = chars.next() {
                    parts.last_mut().unwrap().push(n);
                }
            }
            ';' => parts.push(String::new()),
            _ => parts.last_mut().unwrap().push(c),
        }
    }
    parts
}

/// One `token<TAB>tag;tag` line per token; sentences end with a blank line.
pub fn to_tsv(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tags) in s.tokens.iter().zip(&s.tags) {
            let joined: Vec<String> = tags.iter().map(|t| escape(&t.to_string())).collect();
            out.push_str(tok);
            out.push('\t');
            out.push_str(&joined.join(";"));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<TaggedSentence>, TagError> {
    let mut sentences = Vec::new();
    let mut current = TaggedSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::replace(
                    &mut current,
                    TaggedSentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let (tok, tags) = line.split_once('\t').ok_or_else(|| TagError::BadTsv {
            line: line_no,
            message: "expected token<TAB>tags".into(),
        })?;
        let tags = split_escaped(tags)
            .iter()
            .map(|t| t.parse::<EditTag>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TagError::BadTsv {
                line: line_no,
                message: e.to_string(),
            })?;
        if current.tokens.is_empty() && tok != START {
            return Err(TagError::BadTsv {
                line: line_no,
                message: format!("sentence must begin with {START}"),
            });
        }
        current.tokens.push(tok.to_string());
        current.tags.push(tags);
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_string).collect()
}
