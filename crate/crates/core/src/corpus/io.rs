//! JSONL readers and writers.
//!
//! Tagging: `{"tokens": [...], "tags": [...]}`.
//! Span classification: `{"tokens": [...], "spans": [[a,b],...], "label": "..."}`
//! with 0-based inclusive spans. Unlabeled: `{"tokens": [...]}` with optional
//! `"spans"`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    check_spans, Dataset, Example, LabelVocab, Schema, SpanExample, TagKind, TagVocab,
    TaggedSequence,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggingRecord {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub tokens: Vec<String>,
    pub spans: Vec<[usize; 2]>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledRecord {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<[usize; 2]>>,
}

/// Parses every non-blank line; returns (line number, record) pairs.
fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn record_err(line: usize, e: Error) -> Error {
    Error::Record {
        record: line,
        message: e.to_string(),
    }
}

/// Loads a tagging file. Without a vocabulary, one is collected from the
/// data: `O` then `B-T`/`I-T` for every type seen, types sorted by name.
pub fn load_tagging(path: impl AsRef<Path>, vocab: Option<&TagVocab>) -> Result<Dataset> {
    let records: Vec<(usize, TaggingRecord)> = read_records(path.as_ref())?;
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => {
            let mut types = BTreeSet::new();
            for (line, r) in &records {
                for t in &r.tags {
                    let kind = TagKind::parse(t).map_err(|e| record_err(*line, e))?;
                    if let Some(ty) = kind.chunk_type() {
                        types.insert(ty.to_string());
                    }
                }
            }
            if types.is_empty() {
                TagVocab::default()
            } else {
                TagVocab::from_types(&types.into_iter().collect::<Vec<_>>())?
            }
        }
    };
    let mut examples = Vec::with_capacity(records.len());
    for (line, r) in records {
        let tags = r
            .tags
            .iter()
            .map(|t| {
                vocab
                    .index_of(t)
                    .ok_or_else(|| Error::Data(format!("tag `{t}` not in vocabulary")))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| record_err(line, e))?;
        let seq = TaggedSequence::new(r.tokens, tags, &vocab).map_err(|e| record_err(line, e))?;
        examples.push(Example::Tagged(seq));
    }
    Ok(Dataset::new(Schema::Tagging(vocab), examples))
}

/// Loads a span-classification file. Without a vocabulary, classes are
/// collected and sorted by name.
pub fn load_spancls(path: impl AsRef<Path>, vocab: Option<&LabelVocab>) -> Result<Dataset> {
    let records: Vec<(usize, SpanRecord)> = read_records(path.as_ref())?;
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => {
            let classes: BTreeSet<&str> = records.iter().map(|(_, r)| r.label.as_str()).collect();
            LabelVocab::new(classes.into_iter().map(str::to_string))?
        }
    };
    let mut examples = Vec::with_capacity(records.len());
    for (line, r) in records {
        let label = vocab.index_of(&r.label).ok_or_else(|| {
            record_err(
                line,
                Error::Data(format!("class `{}` not in vocabulary", r.label)),
            )
        })?;
        let spans = r.spans.iter().map(|s| (s[0], s[1])).collect();
        let ex = SpanExample::new(r.tokens, spans, label).map_err(|e| record_err(line, e))?;
        examples.push(Example::Span(ex));
    }
    Ok(Dataset::new(Schema::SpanCls(vocab), examples))
}

/// Loads unlabeled sentences as examples with placeholder labels: all-`O`
/// tags for tagging, class 0 for span classification. Only the tokens (and,
/// for span tasks, the proposed spans) are meaningful.
pub fn load_unlabeled(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<Example>> {
    let records: Vec<(usize, UnlabeledRecord)> = read_records(path.as_ref())?;
    records
        .into_iter()
        .map(|(line, r)| match schema {
            Schema::Tagging(v) => {
                let tags = vec![v.outside(); r.tokens.len()];
                Ok(Example::Tagged(TaggedSequence {
                    tokens: r.tokens,
                    tags,
                }))
            }
            Schema::SpanCls(_) => {
                let spans: Vec<(usize, usize)> = r
                    .spans
                    .unwrap_or_default()
                    .iter()
                    .map(|s| (s[0], s[1]))
                    .collect();
                check_spans(&spans, r.tokens.len()).map_err(|e| record_err(line, e))?;
                Ok(Example::Span(SpanExample {
                    tokens: r.tokens,
                    spans,
                    label: 0,
                }))
            }
        })
        .collect()
}

pub fn example_record(example: &Example, schema: &Schema) -> serde_json::Value {
    match (example, schema) {
        (Example::Tagged(t), Schema::Tagging(v)) => serde_json::to_value(TaggingRecord {
            tokens: t.tokens.clone(),
            tags: t
                .tags
                .iter()
                .map(|&i| v.label(i).unwrap_or("O").to_string())
                .collect(),
        }),
        (Example::Span(s), Schema::SpanCls(v)) => serde_json::to_value(SpanRecord {
            tokens: s.tokens.clone(),
            spans: s.spans.iter().map(|&(a, b)| [a, b]).collect(),
            label: v.class(s.label).unwrap_or_default().to_string(),
        }),
        _ => serde_json::to_value(UnlabeledRecord {
            tokens: example.tokens().to_vec(),
            spans: None,
        }),
    }
    .expect("records serialize")
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in &dataset.examples {
        serde_json::to_writer(&mut w, &example_record(ex, &dataset.schema))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_unlabeled(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        let rec = UnlabeledRecord {
            tokens: ex.tokens().to_vec(),
            spans: match ex {
                Example::Span(s) => Some(s.spans.iter().map(|&(a, b)| [a, b]).collect()),
                Example::Tagged(_) => None,
            },
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
