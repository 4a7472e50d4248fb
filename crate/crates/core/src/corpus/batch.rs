use super::{Example, Schema, TokenVocab};
use crate::error::{Error, Result};

/// One row of a batch before id lookup: token slots after the CLS position.
///
/// `None` slots are pads. They may sit inside the sequence when an
/// augmented sequence is aligned against its original.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSequence {
    pub tokens: Vec<Option<String>>,
    /// Marks tokens inside a span-classification target span.
    pub markers: Vec<bool>,
    /// Per-slot tag for tagging tasks; `None` where ignorable.
    pub tags: Vec<Option<usize>>,
    /// Class label for span tasks.
    pub class: Option<usize>,
}

impl SlotSequence {
    /// Plain (unaligned) slots for an example. With `labeled == false` the
    /// labels are left empty, which is how unlabeled data enters a batch.
    pub fn from_example(example: &Example, schema: &Schema, labeled: bool) -> Self {
        let tokens = example.tokens().iter().cloned().map(Some).collect();
        match example {
            Example::Tagged(t) => Self {
                tokens,
                markers: vec![false; t.tokens.len()],
                tags: if labeled {
                    t.tags.iter().copied().map(Some).collect()
                } else {
                    vec![None; t.tokens.len()]
                },
                class: None,
            },
            Example::Span(s) => Self {
                tokens,
                markers: example.target_mask(schema),
                tags: vec![None; s.tokens.len()],
                class: labeled.then_some(s.label),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchLabels {
    /// `size × max_len` tags; `None` on CLS, PAD and unlabeled slots.
    Tags(Vec<Option<usize>>),
    /// One class per row; `None` for unlabeled rows.
    Classes(Vec<Option<usize>>),
}

/// A padded batch. Position 0 of every row is CLS.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub max_len: usize,
    pub token_ids: Vec<usize>,
    /// 1 inside a marked target span, else 0.
    pub segments: Vec<u8>,
    /// True on CLS and real tokens, false on pads.
    pub mask: Vec<bool>,
    /// Position id of each slot: the number of real slots before it, so
    /// interior pads do not shift the positions of later tokens.
    pub position_ids: Vec<usize>,
    /// Number of slots after CLS per row, interior pads included.
    pub lengths: Vec<usize>,
    pub labels: BatchLabels,
}

impl Batch {
    pub fn from_slots(
        rows: &[SlotSequence],
        vocab: &TokenVocab,
        max_len: usize,
        tagging: bool,
    ) -> Result<Self> {
        let size = rows.len();
        let n = size * max_len;
        let mut token_ids = vec![TokenVocab::PAD; n];
        let mut segments = vec![0u8; n];
        let mut mask = vec![false; n];
        let mut position_ids = vec![0; n];
        let mut lengths = Vec::with_capacity(size);
        let mut tags = vec![None; n];
        let mut classes = Vec::with_capacity(size);
        for (b, row) in rows.iter().enumerate() {
            if row.len() + 1 > max_len {
                return Err(Error::Data(format!(
                    "row {b}: {} tokens plus CLS exceed max length {max_len}",
                    row.len()
                )));
            }
            let base = b * max_len;
            token_ids[base] = TokenVocab::CLS;
            mask[base] = true;
            let mut next = 1;
            for (i, tok) in row.tokens.iter().enumerate() {
                let p = base + 1 + i;
                if let Some(tok) = tok {
                    position_ids[p] = next;
                    next += 1;
                    token_ids[p] = vocab.id(tok);
                    mask[p] = true;
                    segments[p] = u8::from(row.markers.get(i).copied().unwrap_or(false));
                    tags[p] = row.tags.get(i).copied().flatten();
                }
            }
            lengths.push(row.len());
            classes.push(row.class);
        }
        Ok(Self {
            size,
            max_len,
            token_ids,
            segments,
            mask,
            position_ids,
            lengths,
            labels: if tagging {
                BatchLabels::Tags(tags)
            } else {
                BatchLabels::Classes(classes)
            },
        })
    }

    /// Tokens of row `b` at unmasked slots after CLS, pads skipped.
    pub fn decode(&self, b: usize, vocab: &TokenVocab) -> Vec<String> {
        let base = b * self.max_len;
        (1..self.max_len)
            .filter(|&i| self.mask[base + i])
            .map(|i| vocab.token(self.token_ids[base + i]).to_string())
            .collect()
    }

    pub fn mask_count(&self, b: usize) -> usize {
        self.mask[b * self.max_len..(b + 1) * self.max_len]
            .iter()
            .filter(|&&m| m)
            .count()
    }
}

/// Pads examples to `max_len` with a leading CLS. Over-length examples are
/// rejected, never truncated.
pub fn pad_batch(
    examples: &[Example],
    schema: &Schema,
    vocab: &TokenVocab,
    max_len: usize,
) -> Result<Batch> {
    let rows: Vec<SlotSequence> = examples
        .iter()
        .map(|e| SlotSequence::from_example(e, schema, true))
        .collect();
    Batch::from_slots(&rows, vocab, max_len, schema.is_tagging())
}
