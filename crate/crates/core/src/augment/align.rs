use super::{Augmented, Edit};
use crate::corpus::{Example, Schema, SlotSequence};
use crate::error::{Error, Result};

/// An original and an augmented example laid over a shared slot grid.
///
/// Slot `s` holds original token `orig_index[s]` and augmented token
/// `aug_index[s]`; `None` is a pad on that side. Substitutions share a slot,
/// deletions leave a pad on the augmented side, insertions a pad on the
/// original side.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub original: Example,
    pub augmented: Example,
    pub orig_index: Vec<Option<usize>>,
    pub aug_index: Vec<Option<usize>>,
}

impl AlignedPair {
    /// The trivial alignment of an example with itself.
    pub fn identity(example: &Example) -> Self {
        let idx: Vec<Option<usize>> = (0..example.len()).map(Some).collect();
        Self {
            original: example.clone(),
            augmented: example.clone(),
            orig_index: idx.clone(),
            aug_index: idx,
        }
    }

    pub fn len(&self) -> usize {
        self.orig_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orig_index.is_empty()
    }

    pub fn x(&self) -> Vec<Option<&str>> {
        side(&self.orig_index, &self.original)
    }

    pub fn x_aug(&self) -> Vec<Option<&str>> {
        side(&self.aug_index, &self.augmented)
    }

    /// Per-slot tags of the original side (tagging only).
    pub fn y(&self) -> Vec<Option<usize>> {
        side_tags(&self.orig_index, &self.original)
    }

    pub fn y_aug(&self) -> Vec<Option<usize>> {
        side_tags(&self.aug_index, &self.augmented)
    }

    /// No pads on either side: every slot is a substitution or untouched.
    pub fn is_perfectly_aligned(&self) -> bool {
        self.orig_index.iter().all(Option::is_some) && self.aug_index.iter().all(Option::is_some)
    }

    /// Batch rows for both sides. Unlabeled rows carry no labels.
    pub fn slot_sequences(&self, schema: &Schema, labeled: bool) -> (SlotSequence, SlotSequence) {
        (
            slots(&self.orig_index, &self.original, schema, labeled),
            slots(&self.aug_index, &self.augmented, schema, labeled),
        )
    }
}

fn side<'a>(index: &[Option<usize>], ex: &'a Example) -> Vec<Option<&'a str>> {
    index
        .iter()
        .map(|i| i.map(|i| ex.tokens()[i].as_str()))
        .collect()
}

fn side_tags(index: &[Option<usize>], ex: &Example) -> Vec<Option<usize>> {
    match ex {
        Example::Tagged(t) => index.iter().map(|i| i.map(|i| t.tags[i])).collect(),
        Example::Span(_) => vec![None; index.len()],
    }
}

fn slots(index: &[Option<usize>], ex: &Example, schema: &Schema, labeled: bool) -> SlotSequence {
    let plain = SlotSequence::from_example(ex, schema, labeled);
    SlotSequence {
        tokens: index
            .iter()
            .map(|i| i.and_then(|i| plain.tokens[i].clone()))
            .collect(),
        markers: index
            .iter()
            .map(|i| i.is_some_and(|i| plain.markers[i]))
            .collect(),
        tags: index
            .iter()
            .map(|i| i.and_then(|i| plain.tags[i]))
            .collect(),
        class: plain.class,
    }
}

struct Slot {
    orig: Option<usize>,
    aug: Option<String>,
}

fn slot_of(slots: &[Slot], pos: usize) -> Result<usize> {
    slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.aug.is_some())
        .nth(pos)
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Data(format!("edit position {pos} beyond augmented sequence")))
}

/// Replays the recorded edits of `augmented` over `original`.
pub fn align(original: &Example, augmented: &Augmented) -> Result<AlignedPair> {
    if augmented.edits.is_empty() {
        if augmented.example.tokens() != original.tokens() {
            return Err(Error::Data(
                "augmented example differs from original but has no edit record".into(),
            ));
        }
        return Ok(AlignedPair::identity(original));
    }
    let mut slots: Vec<Slot> = original
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| Slot {
            orig: Some(i),
            aug: Some(t.clone()),
        })
        .collect();

    for edit in &augmented.edits {
        match edit {
            Edit::Replace { pos, to, .. } => {
                let s = slot_of(&slots, *pos)?;
                slots[s].aug = Some(to.clone());
            }
            Edit::Delete { pos, .. } => {
                let s = slot_of(&slots, *pos)?;
                slots[s].aug = None;
            }
            Edit::Insert { pos, token } => {
                let at = if *pos == 0 {
                    0
                } else {
                    slot_of(&slots, pos - 1)? + 1
                };
                slots.insert(
                    at,
                    Slot {
                        orig: None,
                        aug: Some(token.clone()),
                    },
                );
            }
            Edit::Swap { i, j } => {
                let (si, sj) = (slot_of(&slots, *i)?, slot_of(&slots, *j)?);
                let tmp = slots[si].aug.take();
                slots[si].aug = slots[sj].aug.take();
                slots[sj].aug = tmp;
            }
            Edit::ReplaceSpan { start, end, to, .. } => {
                let held: Vec<usize> = (*start..=*end)
                    .map(|p| slot_of(&slots, p))
                    .collect::<Result<_>>()?;
                let shared = held.len().min(to.len());
                for k in 0..shared {
                    slots[held[k]].aug = Some(to[k].clone());
                }
                for &s in &held[shared..] {
                    slots[s].aug = None;
                }
                let at = held[held.len() - 1] + 1;
                let extra = to[shared..].iter().map(|tok| Slot {
                    orig: None,
                    aug: Some(tok.clone()),
                });
                slots.splice(at..at, extra);
            }
        }
    }
    slots.retain(|s| s.orig.is_some() || s.aug.is_some());

    let mut next = 0;
    let mut aug_index = Vec::with_capacity(slots.len());
    for s in &slots {
        match &s.aug {
            Some(tok) => {
                if augmented.example.tokens().get(next) != Some(tok) {
                    return Err(Error::Data(
                        "edit record does not reproduce the augmented example".into(),
                    ));
                }
                aug_index.push(Some(next));
                next += 1;
            }
            None => aug_index.push(None),
        }
    }
    if next != augmented.example.len() {
        return Err(Error::Data(
            "edit record does not reproduce the augmented example".into(),
        ));
    }
    Ok(AlignedPair {
        original: original.clone(),
        augmented: augmented.example.clone(),
        orig_index: slots.iter().map(|s| s.orig).collect(),
        aug_index,
    })
}
