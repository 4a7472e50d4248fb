use std::collections::{BTreeMap, HashMap};

use super::SimilarityIndex;
use crate::corpus::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanEntry {
    pub tokens: Vec<String>,
    pub freq: usize,
}

/// Target spans seen in training data, grouped by type, with frequencies and
/// optional pooled-encoding neighbourhoods.
#[derive(Clone, Debug, Default)]
pub struct SpanTable {
    entries: BTreeMap<String, Vec<SpanEntry>>,
    lookup: HashMap<(String, Vec<String>), usize>,
    similarity: BTreeMap<String, SimilarityIndex>,
}

fn key(tokens: &[String]) -> String {
    tokens.join("\u{1f}")
}

pub fn build_span_table(dataset: &Dataset) -> Result<SpanTable> {
    let mut table = SpanTable::default();
    for ex in &dataset.examples {
        for chunk in ex.targets(&dataset.schema) {
            let toks = ex.tokens()[chunk.start..=chunk.end].to_vec();
            table.add(&chunk.kind, toks);
        }
    }
    if table.entries.is_empty() {
        return Err(Error::Data(
            "no target spans in dataset; span table is empty".into(),
        ));
    }
    Ok(table)
}

impl SpanTable {
    fn add(&mut self, ty: &str, tokens: Vec<String>) {
        let list = self.entries.entry(ty.to_string()).or_default();
        match self.lookup.get(&(ty.to_string(), tokens.clone())) {
            Some(&i) => list[i].freq += 1,
            None => {
                self.lookup
                    .insert((ty.to_string(), tokens.clone()), list.len());
                list.push(SpanEntry { tokens, freq: 1 });
            }
        }
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self, ty: &str) -> &[SpanEntry] {
        self.entries.get(ty).map_or(&[], Vec::as_slice)
    }

    pub fn position(&self, ty: &str, tokens: &[String]) -> Option<usize> {
        self.lookup.get(&(ty.to_string(), tokens.to_vec())).copied()
    }

    pub fn has_encodings(&self) -> bool {
        !self.similarity.is_empty()
    }

    /// Computes pooled encodings for every entry with `encode` (called once
    /// per type with that type's span token lists) and indexes them.
    pub fn attach_encodings<F>(&mut self, mut encode: F) -> Result<()>
    where
        F: FnMut(&[Vec<String>]) -> Result<Vec<Vec<f64>>>,
    {
        let mut similarity = BTreeMap::new();
        for (ty, list) in &self.entries {
            let spans: Vec<Vec<String>> = list.iter().map(|e| e.tokens.clone()).collect();
            let vectors = encode(&spans)?;
            let items = spans.iter().map(|s| key(s)).collect();
            similarity.insert(ty.clone(), SimilarityIndex::new(items, vectors)?);
        }
        self.similarity = similarity;
        Ok(())
    }

    /// Top neighbours of a known span as `(entry index, cosine)`. `None` when
    /// encodings are not attached or the span is not in the table.
    pub fn similar(&self, ty: &str, tokens: &[String]) -> Option<Vec<(usize, f64)>> {
        let idx = self.similarity.get(ty)?;
        let found = idx.topk_similar(&key(tokens)).ok()?;
        Some(
            found
                .into_iter()
                .map(|(k, c)| {
                    let toks: Vec<String> = k.split('\u{1f}').map(str::to_string).collect();
                    (
                        self.position(ty, &toks)
                            .expect("indexed spans are in the table"),
                        c,
                    )
                })
                .collect(),
        )
    }
}
