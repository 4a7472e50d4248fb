//! Data model for tagging and span-classification corpora.
//!
//! Tagging examples carry one IOB tag per token; span-classification examples
//! carry a set of non-overlapping inclusive spans plus a single class label.
//! Both share the notion of *target spans*: the tagged chunks, or the given
//! spans. Augmentation never edits tokens inside a target span except through
//! the span-level operator.

mod batch;
mod io;
mod iob;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use batch::{pad_batch, Batch, BatchLabels, SlotSequence};
pub use io::{
    example_record, load_spancls, load_tagging, load_unlabeled, save_dataset, save_unlabeled,
    SpanRecord, TaggingRecord, UnlabeledRecord,
};
pub use iob::{chunks_to_tags, extract_chunks, repair_iob, validate_iob, Chunk, TagKind};

use crate::error::{Error, Result};

/// Chunk type used for span-classification targets in span tables.
pub const SPAN_TARGET_TYPE: &str = "TARGET";

/// Ordered IOB tag set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TagVocab {
    labels: Vec<String>,
    kinds: Vec<TagKind>,
    index: HashMap<String, usize>,
}

impl TagVocab {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        let mut kinds = Vec::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate tag `{l}`")));
            }
            kinds.push(TagKind::parse(l)?);
        }
        if !index.contains_key("O") {
            return Err(Error::Data("tag vocabulary must contain `O`".into()));
        }
        for k in &kinds {
            if let TagKind::Begin(ty) = k {
                if !index.contains_key(&format!("I-{ty}")) {
                    return Err(Error::Data(format!("B-{ty} has no matching I-{ty}")));
                }
            }
        }
        Ok(Self {
            labels,
            kinds,
            index,
        })
    }

    /// `O` followed by `B-T`, `I-T` for each type, in the given order.
    pub fn from_types<S: AsRef<str>>(types: &[S]) -> Result<Self> {
        let mut labels = vec!["O".to_string()];
        for t in types {
            labels.push(format!("B-{}", t.as_ref()));
            labels.push(format!("I-{}", t.as_ref()));
        }
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn kind(&self, i: usize) -> Option<&TagKind> {
        self.kinds.get(i)
    }

    pub fn outside(&self) -> usize {
        self.index["O"]
    }

    pub fn begin(&self, ty: &str) -> Option<usize> {
        self.index_of(&format!("B-{ty}"))
    }

    pub fn inside(&self, ty: &str) -> Option<usize> {
        self.index_of(&format!("I-{ty}"))
    }

    /// Chunk types in vocabulary order.
    pub fn types(&self) -> Vec<&str> {
        self.kinds
            .iter()
            .filter_map(|k| match k {
                TagKind::Begin(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl Default for TagVocab {
    fn default() -> Self {
        Self::new(["O", "B-AS", "I-AS", "B-OP", "I-OP"]).expect("default tag set is valid")
    }
}

impl TryFrom<Vec<String>> for TagVocab {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TagVocab> for Vec<String> {
    fn from(v: TagVocab) -> Self {
        v.labels
    }
}

/// Ordered class set for span classification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocab {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate class `{c}`")));
            }
        }
        if classes.len() < 2 {
            return Err(Error::Data(format!(
                "label vocabulary needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        Ok(Self { classes, index })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.index.get(class).copied()
    }

    pub fn class(&self, i: usize) -> Option<&str> {
        self.classes.get(i).map(String::as_str)
    }
}

impl TryFrom<Vec<String>> for LabelVocab {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelVocab> for Vec<String> {
    fn from(v: LabelVocab) -> Self {
        v.classes
    }
}

/// Tokens with one tag index per token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSequence {
    pub tokens: Vec<String>,
    pub tags: Vec<usize>,
}

impl TaggedSequence {
    pub fn new(tokens: Vec<String>, tags: Vec<usize>, vocab: &TagVocab) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::Data(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        validate_iob(&tags, vocab)?;
        Ok(Self { tokens, tags })
    }
}

/// Tokens with a set of non-overlapping inclusive spans and a class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanExample {
    pub tokens: Vec<String>,
    pub spans: Vec<(usize, usize)>,
    pub label: usize,
}

impl SpanExample {
    pub fn new(tokens: Vec<String>, spans: Vec<(usize, usize)>, label: usize) -> Result<Self> {
        check_spans(&spans, tokens.len())?;
        Ok(Self {
            tokens,
            spans,
            label,
        })
    }
}

/// Bounds (`a <= b < len`) and pairwise non-overlap.
pub fn check_spans(spans: &[(usize, usize)], len: usize) -> Result<()> {
    for &(a, b) in spans {
        if a > b {
            return Err(Error::Data(format!("span ({a},{b}) has start after end")));
        }
        if b >= len {
            return Err(Error::Data(format!(
                "span ({a},{b}) exceeds sentence of {len} tokens"
            )));
        }
    }
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[1].0 <= w[0].1 {
            return Err(Error::Data(format!(
                "spans ({},{}) and ({},{}) overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Example {
    Tagged(TaggedSequence),
    Span(SpanExample),
}

impl Example {
    pub fn tokens(&self) -> &[String] {
        match self {
            Example::Tagged(t) => &t.tokens,
            Example::Span(s) => &s.tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens().len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens().is_empty()
    }

    /// Typed target spans. Span-classification spans get [`SPAN_TARGET_TYPE`].
    pub fn targets(&self, schema: &Schema) -> Vec<Chunk> {
        match (self, schema) {
            (Example::Tagged(t), Schema::Tagging(v)) => {
                // Stored sequences are validated, so the unchecked walk is exact.
                extract_chunks(&t.tags, v).unwrap_or_else(|_| {
                    extract_chunks(&repair_iob(&t.tags, v), v).unwrap_or_default()
                })
            }
            (Example::Span(s), _) => {
                let mut spans: Vec<Chunk> = s
                    .spans
                    .iter()
                    .map(|&(a, b)| Chunk::new(SPAN_TARGET_TYPE, a, b))
                    .collect();
                spans.sort();
                spans
            }
            (Example::Tagged(_), Schema::SpanCls(_)) => Vec::new(),
        }
    }

    /// Inclusive ranges of the target spans.
    pub fn target_spans(&self, schema: &Schema) -> Vec<(usize, usize)> {
        match self {
            Example::Span(s) => s.spans.clone(),
            Example::Tagged(_) => self.targets(schema).iter().map(Chunk::range).collect(),
        }
    }

    /// `true` for tokens inside some target span.
    pub fn target_mask(&self, schema: &Schema) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for (a, b) in self.target_spans(schema) {
            for m in &mut mask[a..=b] {
                *m = true;
            }
        }
        mask
    }
}

/// The task together with its output vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    Tagging(TagVocab),
    SpanCls(LabelVocab),
}

impl Schema {
    pub fn num_classes(&self) -> usize {
        match self {
            Schema::Tagging(v) => v.len(),
            Schema::SpanCls(v) => v.len(),
        }
    }

    pub fn is_tagging(&self) -> bool {
        matches!(self, Schema::Tagging(_))
    }

    pub fn tag_vocab(&self) -> Option<&TagVocab> {
        match self {
            Schema::Tagging(v) => Some(v),
            Schema::SpanCls(_) => None,
        }
    }

    pub fn label_vocab(&self) -> Option<&LabelVocab> {
        match self {
            Schema::SpanCls(v) => Some(v),
            Schema::Tagging(_) => None,
        }
    }

    /// Span types that can occur as targets.
    pub fn target_types(&self) -> Vec<String> {
        match self {
            Schema::Tagging(v) => v.types().into_iter().map(str::to_string).collect(),
            Schema::SpanCls(_) => vec![SPAN_TARGET_TYPE.to_string()],
        }
    }
}

/// Default held-out dev size when no separate dev file is supplied.
pub const DEFAULT_DEV_SIZE: usize = 150;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub schema: Schema,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(schema: Schema, examples: Vec<Example>) -> Self {
        Self { schema, examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Splits off the last `n` examples as a dev set.
    pub fn split_tail(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n >= self.len() {
            return Err(Error::Data(format!(
                "cannot hold out {n} dev examples from {} training examples",
                self.len()
            )));
        }
        let cut = self.len() - n;
        Ok((
            Dataset::new(self.schema.clone(), self.examples[..cut].to_vec()),
            Dataset::new(self.schema.clone(), self.examples[cut..].to_vec()),
        ))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(
            self.schema.clone(),
            indices.iter().map(|&i| self.examples[i].clone()).collect(),
        )
    }

    pub fn sentences(&self) -> impl Iterator<Item = &[String]> {
        self.examples.iter().map(Example::tokens)
    }
}

/// Input-token vocabulary with the three reserved entries at fixed ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub const PAD: usize = 0;
    pub const CLS: usize = 1;
    pub const UNK: usize = 2;
    pub const PAD_TOKEN: &'static str = "[PAD]";
    pub const CLS_TOKEN: &'static str = "[CLS]";
    pub const UNK_TOKEN: &'static str = "[UNK]";

    /// Reserved entries followed by every distinct token in first-seen order.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut tokens: Vec<String> = [Self::PAD_TOKEN, Self::CLS_TOKEN, Self::UNK_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut index: HashMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for s in sentences {
            for t in s {
                let t = t.as_ref();
                if !index.contains_key(t) {
                    index.insert(t.to_string(), tokens.len());
                    tokens.push(t.to_string());
                }
            }
        }
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens
            .get(id)
            .map(String::as_str)
            .unwrap_or(Self::UNK_TOKEN)
    }
}

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

/// Convenience for tests and generators: whitespace-split tokens.
pub fn tokens_of(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}
