use std::fmt;

use serde::{Deserialize, Serialize};

use super::TagVocab;
use crate::error::{Error, Result};

/// Parsed form of one IOB tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TagKind {
    Outside,
    Begin(String),
    Inside(String),
}

impl TagKind {
    pub fn parse(label: &str) -> Result<Self> {
        if label == "O" {
            return Ok(TagKind::Outside);
        }
        match label.split_once('-') {
            Some(("B", ty)) if !ty.is_empty() => Ok(TagKind::Begin(ty.to_string())),
            Some(("I", ty)) if !ty.is_empty() => Ok(TagKind::Inside(ty.to_string())),
            _ => Err(Error::Data(format!("`{label}` is not an IOB tag"))),
        }
    }

    pub fn chunk_type(&self) -> Option<&str> {
        match self {
            TagKind::Outside => None,
            TagKind::Begin(t) | TagKind::Inside(t) => Some(t),
        }
    }
}

/// A typed, inclusive token range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn new(kind: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            kind: kind.into(),
            start,
            end,
        }
    }

    pub fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.kind, self.start, self.end)
    }
}

/// Checks that every `I-X` follows a `B-X` or `I-X` of the same type.
///
/// Returns the first violating position as an [`Error::Iob`].
pub fn validate_iob(tags: &[usize], vocab: &TagVocab) -> Result<()> {
    let mut prev: Option<&TagKind> = None;
    for (i, &t) in tags.iter().enumerate() {
        let kind = vocab.kind(t).ok_or_else(|| Error::Iob {
            position: i,
            message: format!("tag index {t} outside vocabulary of {}", vocab.len()),
        })?;
        if let TagKind::Inside(ty) = kind {
            let continues = matches!(prev.and_then(TagKind::chunk_type), Some(p) if p == ty);
            if !continues {
                return Err(Error::Iob {
                    position: i,
                    message: format!("I-{ty} not preceded by B-{ty} or I-{ty}"),
                });
            }
        }
        prev = Some(kind);
    }
    Ok(())
}

/// Maximal `B-X (I-X)*` runs as inclusive ranges. Rejects invalid IOB.
pub fn extract_chunks(tags: &[usize], vocab: &TagVocab) -> Result<Vec<Chunk>> {
    validate_iob(tags, vocab)?;
    Ok(chunks_unchecked(tags, vocab))
}

fn chunks_unchecked(tags: &[usize], vocab: &TagVocab) -> Vec<Chunk> {
    let mut out: Vec<Chunk> = Vec::new();
    let mut open: Option<Chunk> = None;
    for (i, &t) in tags.iter().enumerate() {
        match vocab.kind(t) {
            Some(TagKind::Begin(ty)) => {
                out.extend(open.take());
                open = Some(Chunk::new(ty.clone(), i, i));
            }
            Some(TagKind::Inside(ty)) => match open.as_mut() {
                Some(c) if &c.kind == ty => c.end = i,
                _ => {
                    out.extend(open.take());
                    open = Some(Chunk::new(ty.clone(), i, i));
                }
            },
            _ => out.extend(open.take()),
        }
    }
    out.extend(open);
    out
}

/// Promotes every orphan `I-X` to `B-X`, the usual chunk-evaluation convention
/// for model outputs that are not valid IOB.
pub fn repair_iob(tags: &[usize], vocab: &TagVocab) -> Vec<usize> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev_type: Option<String> = None;
    for &t in tags {
        let kind = vocab.kind(t).cloned().unwrap_or(TagKind::Outside);
        let fixed = match &kind {
            TagKind::Inside(ty) if prev_type.as_deref() != Some(ty) => {
                vocab.begin(ty).unwrap_or(vocab.outside())
            }
            TagKind::Outside => vocab.outside(),
            _ => t,
        };
        prev_type = vocab
            .kind(fixed)
            .and_then(|k| k.chunk_type().map(str::to_string));
        out.push(fixed);
    }
    out
}

/// Rebuilds a tag sequence of length `len` from non-overlapping chunks.
pub fn chunks_to_tags(chunks: &[Chunk], len: usize, vocab: &TagVocab) -> Result<Vec<usize>> {
    let mut tags = vec![vocab.outside(); len];
    for c in chunks {
        if c.start > c.end || c.end >= len {
            return Err(Error::Data(format!(
                "chunk {c} out of bounds for length {len}"
            )));
        }
        let b = vocab
            .begin(&c.kind)
            .ok_or_else(|| Error::Data(format!("no B-{} in tag vocabulary", c.kind)))?;
        let inside = vocab
            .inside(&c.kind)
            .ok_or_else(|| Error::Data(format!("no I-{} in tag vocabulary", c.kind)))?;
        if tags[c.start..=c.end].iter().any(|&t| t != vocab.outside()) {
            return Err(Error::Data(format!("chunk {c} overlaps another chunk")));
        }
        tags[c.start] = b;
        for t in &mut tags[c.start + 1..=c.end] {
            *t = inside;
        }
    }
    Ok(tags)
}
