//! Augmentation operators.
//!
//! Token-level operators (replace, insert, delete, swap) only touch
//! non-target tokens; the span-level operator replaces a whole target span
//! with another span of the same type drawn from training data. Every
//! application records an [`Edit`] so that [`align`] can line the augmented
//! sequence up with its original without re-deriving a diff.

mod align;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use align::{align, AlignedPair};

use crate::corpus::{Example, Schema, SpanExample, TaggedSequence};
use crate::error::{Error, Result};
use crate::sampling::{
    categorical_sample, importance_weights_from_scores, similarity_weight, SimilarityIndex,
    SpanTable, TfidfTable,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Replace,
    Insert,
    Delete,
    Swap,
    SpanReplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PreSampling {
    Uniform,
    Importance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PostSampling {
    Uniform,
    Frequency,
    /// Cosine over pooled encoder outputs.
    Similarity,
    /// Cosine over token embeddings.
    WordSimilarity,
}

/// The nine supported operator/strategy combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DaOperator {
    Tr,
    TrImp,
    Ins,
    Del,
    DelImp,
    Sw,
    Spr,
    SprFreq,
    SprSim,
}

impl DaOperator {
    pub const ALL: [DaOperator; 9] = [
        DaOperator::Tr,
        DaOperator::TrImp,
        DaOperator::Ins,
        DaOperator::Del,
        DaOperator::DelImp,
        DaOperator::Sw,
        DaOperator::Spr,
        DaOperator::SprFreq,
        DaOperator::SprSim,
    ];

    pub fn kind(self) -> OpKind {
        match self {
            DaOperator::Tr | DaOperator::TrImp => OpKind::Replace,
            DaOperator::Ins => OpKind::Insert,
            DaOperator::Del | DaOperator::DelImp => OpKind::Delete,
            DaOperator::Sw => OpKind::Swap,
            DaOperator::Spr | DaOperator::SprFreq | DaOperator::SprSim => OpKind::SpanReplace,
        }
    }

    pub fn pre_sampling(self) -> PreSampling {
        match self {
            DaOperator::TrImp | DaOperator::DelImp => PreSampling::Importance,
            _ => PreSampling::Uniform,
        }
    }

    pub fn post_sampling(self) -> Option<PostSampling> {
        match self {
            DaOperator::Tr | DaOperator::TrImp | DaOperator::Ins => {
                Some(PostSampling::WordSimilarity)
            }
            DaOperator::Del | DaOperator::DelImp => None,
            DaOperator::Sw | DaOperator::Spr => Some(PostSampling::Uniform),
            DaOperator::SprFreq => Some(PostSampling::Frequency),
            DaOperator::SprSim => Some(PostSampling::Similarity),
        }
    }

    pub fn is_span_level(self) -> bool {
        self.kind() == OpKind::SpanReplace
    }

    pub fn name(self) -> &'static str {
        match self {
            DaOperator::Tr => "TR",
            DaOperator::TrImp => "TR-IMP",
            DaOperator::Ins => "INS",
            DaOperator::Del => "DEL",
            DaOperator::DelImp => "DEL-IMP",
            DaOperator::Sw => "SW",
            DaOperator::Spr => "SPR",
            DaOperator::SprFreq => "SPR-FREQ",
            DaOperator::SprSim => "SPR-SIM",
        }
    }
}

impl fmt::Display for DaOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DaOperator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DaOperator::ALL
            .into_iter()
            .find(|op| op.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown augmentation operator `{s}`")))
    }
}

impl TryFrom<String> for DaOperator {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DaOperator> for String {
    fn from(op: DaOperator) -> Self {
        op.name().to_string()
    }
}

/// An operator plus the polarity-lexicon guard switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSpec {
    pub op: DaOperator,
    pub polarity_guard: bool,
}

impl OpSpec {
    pub fn new(op: DaOperator) -> Self {
        Self {
            op,
            polarity_guard: false,
        }
    }

    pub fn with_guard(mut self, on: bool) -> Self {
        self.polarity_guard = on;
        self
    }
}

/// Sentiment-bearing words that replacement and insertion must avoid.
#[derive(Clone, Debug, Default)]
pub struct PolarityLexicon {
    words: HashSet<String>,
}

impl PolarityLexicon {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Self {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    /// One word per line; blank lines ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Read-only tables an operator may consult.
#[derive(Clone, Copy)]
pub struct AugmentTables<'a> {
    pub schema: &'a Schema,
    pub tfidf: Option<&'a TfidfTable>,
    pub words: Option<&'a SimilarityIndex>,
    pub spans: Option<&'a SpanTable>,
    pub polarity: Option<&'a PolarityLexicon>,
}

impl<'a> AugmentTables<'a> {
    pub fn new(schema: &'a Schema) -> Self {
        Self {
            schema,
            tfidf: None,
            words: None,
            spans: None,
            polarity: None,
        }
    }
}

/// One recorded edit. Positions index the sequence as it was just before
/// the edit was applied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    Replace {
        pos: usize,
        from: String,
        to: String,
    },
    Insert {
        pos: usize,
        token: String,
    },
    Delete {
        pos: usize,
        token: String,
    },
    Swap {
        i: usize,
        j: usize,
    },
    ReplaceSpan {
        start: usize,
        end: usize,
        from: Vec<String>,
        to: Vec<String>,
    },
}

impl Edit {
    /// Change in sequence length caused by this edit.
    pub fn length_delta(&self) -> isize {
        match self {
            Edit::Insert { .. } => 1,
            Edit::Delete { .. } => -1,
            Edit::ReplaceSpan { from, to, .. } => to.len() as isize - from.len() as isize,
            _ => 0,
        }
    }
}

/// Why an application did not change anything, or what it noticed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentFlag {
    NoEligiblePosition,
    NoCandidate,
    GuardExhausted,
    IdenticalReplacement,
    /// Deletion left nothing but target tokens.
    TargetsOnly,
    /// Result would not fit the configured length; original kept.
    Overlength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub op: DaOperator,
    pub example: Example,
    pub edits: Vec<Edit>,
    pub flags: Vec<AugmentFlag>,
}

impl Augmented {
    pub fn unchanged(op: DaOperator, example: Example, flag: AugmentFlag) -> Self {
        Self {
            op,
            example,
            edits: Vec::new(),
            flags: vec![flag],
        }
    }

    /// True when no edit was applied.
    pub fn is_noop(&self) -> bool {
        self.edits.is_empty()
    }
}

/// Token-level applications per sentence: `max(1, ⌊len / 10⌋)`.
pub fn num_applications(sentence_len: usize) -> usize {
    (sentence_len / 10).max(1)
}

fn pick_position<R: Rng + ?Sized>(
    candidates: &[usize],
    tokens: &[String],
    pre: PreSampling,
    tables: &AugmentTables<'_>,
    rng: &mut R,
) -> Result<usize> {
    let weights = match pre {
        PreSampling::Uniform => vec![1.0; candidates.len()],
        PreSampling::Importance => {
            let tfidf = tables
                .tfidf
                .ok_or_else(|| Error::Config("importance sampling needs a TF-IDF table".into()))?;
            let scores = tfidf.sentence_scores(tokens)?;
            let sub: Vec<f64> = candidates.iter().map(|&i| scores[i]).collect();
            importance_weights_from_scores(&sub)?
        }
    };
    Ok(candidates[categorical_sample(&weights, rng)?])
}

/// Draws a similar token for `token`, honouring the polarity guard.
fn similar_token<R: Rng + ?Sized>(
    token: &str,
    spec: &OpSpec,
    tables: &AugmentTables<'_>,
    rng: &mut R,
) -> Result<std::result::Result<String, AugmentFlag>> {
    let words = tables
        .words
        .ok_or_else(|| Error::Config(format!("{} needs a word similarity index", spec.op)))?;
    let Ok(neighbors) = words.topk_similar(token) else {
        return Ok(Err(AugmentFlag::NoCandidate));
    };
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|&(_, c)| similarity_weight(c))
        .collect();
    if !weights.iter().any(|&w| w > 0.0) {
        return Ok(Err(AugmentFlag::NoCandidate));
    }
    let guard = spec.polarity_guard.then_some(tables.polarity).flatten();
    // first draw plus up to 10 resamples
    for _ in 0..=10 {
        let cand = neighbors[categorical_sample(&weights, rng)?].0;
        match guard {
            Some(lex) if lex.contains(cand) => continue,
            _ => return Ok(Ok(cand.to_string())),
        }
    }
    Ok(Err(AugmentFlag::GuardExhausted))
}

fn insert_token(example: &mut Example, at: usize, token: String, outside: Option<usize>) {
    match example {
        Example::Tagged(t) => {
            t.tokens.insert(at, token);
            t.tags.insert(at, outside.expect("tagging schema has O"));
        }
        Example::Span(s) => {
            s.tokens.insert(at, token);
            for sp in &mut s.spans {
                if sp.0 >= at {
                    sp.0 += 1;
                    sp.1 += 1;
                }
            }
        }
    }
}

fn delete_token(example: &mut Example, at: usize) -> String {
    match example {
        Example::Tagged(t) => {
            t.tags.remove(at);
            t.tokens.remove(at)
        }
        Example::Span(s) => {
            for sp in &mut s.spans {
                if sp.0 > at {
                    sp.0 -= 1;
                    sp.1 -= 1;
                }
            }
            s.tokens.remove(at)
        }
    }
}

fn tokens_mut(example: &mut Example) -> &mut Vec<String> {
    match example {
        Example::Tagged(TaggedSequence { tokens, .. }) => tokens,
        Example::Span(SpanExample { tokens, .. }) => tokens,
    }
}

/// One application of a token-level operator. Returns the edit, or the flag
/// explaining why nothing changed.
pub fn apply_token_op<R: Rng + ?Sized>(
    example: &Example,
    spec: &OpSpec,
    tables: &AugmentTables<'_>,
    rng: &mut R,
) -> Result<Augmented> {
    let op = spec.op;
    if op.is_span_level() {
        return Err(Error::Config(format!("{op} is not a token-level operator")));
    }
    let mask = example.target_mask(tables.schema);
    let free: Vec<usize> = (0..example.len()).filter(|&i| !mask[i]).collect();
    let outside = tables.schema.tag_vocab().map(|v| v.outside());
    let mut out = example.clone();
    let tokens = example.tokens();
    let noop = |flag| Ok(Augmented::unchanged(op, example.clone(), flag));

    let edit = match op.kind() {
        OpKind::Replace => {
            if free.is_empty() {
                return noop(AugmentFlag::NoEligiblePosition);
            }
            let pos = pick_position(&free, tokens, op.pre_sampling(), tables, rng)?;
            match similar_token(&tokens[pos], spec, tables, rng)? {
                Ok(to) => {
                    tokens_mut(&mut out)[pos] = to.clone();
                    Edit::Replace {
                        pos,
                        from: tokens[pos].clone(),
                        to,
                    }
                }
                Err(flag) => return noop(flag),
            }
        }
        OpKind::Insert => {
            if free.is_empty() {
                return noop(AugmentFlag::NoEligiblePosition);
            }
            let pos = pick_position(&free, tokens, op.pre_sampling(), tables, rng)?;
            let after: bool = rng.random();
            match similar_token(&tokens[pos], spec, tables, rng)? {
                Ok(token) => {
                    let at = pos + usize::from(after);
                    insert_token(&mut out, at, token.clone(), outside);
                    Edit::Insert { pos: at, token }
                }
                Err(flag) => return noop(flag),
            }
        }
        OpKind::Delete => {
            if free.is_empty() || example.len() < 2 {
                return noop(AugmentFlag::NoEligiblePosition);
            }
            let pos = pick_position(&free, tokens, op.pre_sampling(), tables, rng)?;
            let token = delete_token(&mut out, pos);
            Edit::Delete { pos, token }
        }
        OpKind::Swap => {
            if free.len() < 2 {
                return noop(AugmentFlag::NoEligiblePosition);
            }
            let a = rng.random_range(0..free.len());
            let mut b = rng.random_range(0..free.len() - 1);
            if b >= a {
                b += 1;
            }
            let (i, j) = (free[a].min(free[b]), free[a].max(free[b]));
            tokens_mut(&mut out).swap(i, j);
            Edit::Swap { i, j }
        }
        OpKind::SpanReplace => unreachable!("rejected above"),
    };

    let mut flags = Vec::new();
    if op.kind() == OpKind::Delete && out.target_mask(tables.schema).iter().all(|&m| m) {
        flags.push(AugmentFlag::TargetsOnly);
    }
    Ok(Augmented {
        op,
        example: out,
        edits: vec![edit],
        flags,
    })
}

/// One application of the span-level operator.
pub fn apply_span_op<R: Rng + ?Sized>(
    example: &Example,
    spec: &OpSpec,
    tables: &AugmentTables<'_>,
    rng: &mut R,
) -> Result<Augmented> {
    let op = spec.op;
    if !op.is_span_level() {
        return Err(Error::Config(format!("{op} is not a span-level operator")));
    }
    let targets = example.targets(tables.schema);
    if targets.is_empty() {
        return Ok(Augmented::unchanged(
            op,
            example.clone(),
            AugmentFlag::NoEligiblePosition,
        ));
    }
    let table = tables
        .spans
        .ok_or_else(|| Error::Config(format!("{op} needs a span table")))?;
    let chunk = &targets[rng.random_range(0..targets.len())];
    let entries = table.entries(&chunk.kind);
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "span table has no `{}` spans",
            chunk.kind
        )));
    }
    let old: Vec<String> = example.tokens()[chunk.start..=chunk.end].to_vec();

    let uniform = vec![1.0; entries.len()];
    let pick = match op.post_sampling() {
        Some(PostSampling::Frequency) => {
            let w: Vec<f64> = entries.iter().map(|e| e.freq as f64).collect();
            categorical_sample(&w, rng)?
        }
        Some(PostSampling::Similarity) => match table.similar(&chunk.kind, &old) {
            Some(neigh) if neigh.iter().any(|&(_, c)| c > 0.0) => {
                let w: Vec<f64> = neigh.iter().map(|&(_, c)| similarity_weight(c)).collect();
                neigh[categorical_sample(&w, rng)?].0
            }
            Some(neigh) if !neigh.is_empty() => {
                return Ok(Augmented::unchanged(
                    op,
                    example.clone(),
                    AugmentFlag::NoCandidate,
                ));
            }
            _ => {
                log::debug!("span not indexed for similarity; sampling uniformly");
                categorical_sample(&uniform, rng)?
            }
        },
        _ => categorical_sample(&uniform, rng)?,
    };
    let new = entries[pick].tokens.clone();

    let mut out = example.clone();
    let (start, end, n, m) = (chunk.start, chunk.end, old.len(), new.len());
    match &mut out {
        Example::Tagged(t) => {
            let v = tables
                .schema
                .tag_vocab()
                .ok_or_else(|| Error::Config("tagged example under a span schema".into()))?;
            let b = v
                .begin(&chunk.kind)
                .expect("chunk types come from the vocabulary");
            let i = v.inside(&chunk.kind).expect("every B-X has an I-X");
            let mut tags = vec![b];
            tags.resize(m, i);
            t.tokens.splice(start..=end, new.iter().cloned());
            t.tags.splice(start..=end, tags);
        }
        Example::Span(s) => {
            s.tokens.splice(start..=end, new.iter().cloned());
            for sp in &mut s.spans {
                if *sp == (start, end) {
                    sp.1 = start + m - 1;
                } else if sp.0 > end {
                    sp.0 = sp.0 + m - n;
                    sp.1 = sp.1 + m - n;
                }
            }
        }
    }
    let flags = if new == old {
        vec![AugmentFlag::IdenticalReplacement]
    } else {
        Vec::new()
    };
    Ok(Augmented {
        op,
        example: out,
        edits: vec![Edit::ReplaceSpan {
            start,
            end,
            from: old,
            to: new,
        }],
        flags,
    })
}

/// Applies an operator the configured number of times: token-level operators
/// `num_applications(len)` times in sequence on the running result,
/// span-level operators once.
pub fn augment<R: Rng + ?Sized>(
    example: &Example,
    spec: &OpSpec,
    tables: &AugmentTables<'_>,
    rng: &mut R,
) -> Result<Augmented> {
    if spec.op.is_span_level() {
        return apply_span_op(example, spec, tables, rng);
    }
    let mut result = Augmented {
        op: spec.op,
        example: example.clone(),
        edits: Vec::new(),
        flags: Vec::new(),
    };
    for _ in 0..num_applications(example.len()) {
        let step = apply_token_op(&result.example, spec, tables, rng)?;
        result.example = step.example;
        result.edits.extend(step.edits);
        for f in step.flags {
            if !result.flags.contains(&f) {
                result.flags.push(f);
            }
        }
    }
    Ok(result)
}
