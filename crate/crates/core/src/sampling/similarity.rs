use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Neighbourhood size for similarity post-sampling.
pub const TOP_K: usize = 10;

/// Exhaustive top-K cosine neighbourhoods over a fixed item set.
#[derive(Clone, Debug)]
pub struct SimilarityIndex {
    items: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        vec![0.0; v.len()]
    }
}

impl SimilarityIndex {
    pub fn new(items: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if items.len() != vectors.len() {
            return Err(Error::Data(format!(
                "{} items but {} vectors",
                items.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Data("embedding vectors differ in dimension".into()));
        }
        let mut index = HashMap::new();
        for (i, it) in items.iter().enumerate() {
            if index.insert(it.clone(), i).is_some() {
                return Err(Error::Data(format!(
                    "duplicate item `{it}` in similarity index"
                )));
            }
        }
        let vectors: Vec<Vec<f64>> = vectors.iter().map(|v| normalize(v)).collect();
        let neighbors = (0..items.len())
            .map(|q| {
                let mut scored: Vec<(usize, f64)> = (0..items.len())
                    .filter(|&j| j != q)
                    .map(|j| {
                        let c: f64 = vectors[q].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                        (j, c.clamp(-1.0, 1.0))
                    })
                    .collect();
                scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                scored.truncate(TOP_K);
                scored
            })
            .collect();
        Ok(Self {
            items,
            index,
            vectors,
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: &str) -> bool {
        self.index.contains_key(item)
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn vector(&self, item: &str) -> Option<&[f64]> {
        self.index.get(item).map(|&i| self.vectors[i].as_slice())
    }

    /// Up to [`TOP_K`] `(candidate, cosine)` pairs, most similar first,
    /// never including `item` itself.
    pub fn topk_similar(&self, item: &str) -> Result<Vec<(&str, f64)>> {
        let &i = self
            .index
            .get(item)
            .ok_or_else(|| Error::Data(format!("`{item}` not in similarity index")))?;
        Ok(self.neighbors[i]
            .iter()
            .map(|&(j, c)| (self.items[j].as_str(), c))
            .collect())
    }
}

/// Sampling weight for a neighbour: negative cosines count as zero.
pub fn similarity_weight(cosine: f64) -> f64 {
    cosine.max(0.0)
}

/// Reads a text embedding file: header `V d`, then `token f1 … fd` per line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))??;
    let mut head = header.split_whitespace().map(str::parse::<usize>);
    let (count, dim) = match (head.next(), head.next(), head.next()) {
        (Some(Ok(v)), Some(Ok(d)), None) => (v, d),
        _ => {
            return Err(parse_err(
                1,
                format!("bad header `{header}`, expected `V d`"),
            ))
        }
    };
    let mut items = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .expect("nonblank line has a first field")
            .to_string();
        let v = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(i + 2, e.to_string()))?;
        if v.len() != dim {
            return Err(parse_err(
                i + 2,
                format!("expected {dim} values, got {}", v.len()),
            ));
        }
        items.push(token);
        vectors.push(v);
    }
    if items.len() != count {
        return Err(parse_err(
            1,
            format!("header says {count} items, file has {}", items.len()),
        ));
    }
    Ok((items, vectors))
}

pub fn save_embeddings(
    path: impl AsRef<Path>,
    items: &[String],
    vectors: &[Vec<f64>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = vectors.first().map_or(0, Vec::len);
    writeln!(w, "{} {}", items.len(), dim)?;
    for (t, v) in items.iter().zip(vectors) {
        write!(w, "{t}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Fallback token vectors: windowed co-occurrence counts against the
/// `max_features` most frequent tokens. Items are in first-seen order.
pub fn cooccurrence_embeddings<S: AsRef<str>>(
    sentences: &[Vec<S>],
    window: usize,
    max_features: usize,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut items: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut freq: Vec<usize> = Vec::new();
    for s in sentences {
        for t in s {
            let t = t.as_ref();
            let i = *index.entry(t).or_insert_with(|| {
                items.push(t.to_string());
                freq.push(0);
                items.len() - 1
            });
            freq[i] += 1;
        }
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
    order.truncate(max_features);
    let mut feature_of = vec![usize::MAX; items.len()];
    for (f, &i) in order.iter().enumerate() {
        feature_of[i] = f;
    }
    let mut vectors = vec![vec![0.0; order.len()]; items.len()];
    for s in sentences {
        let ids: Vec<usize> = s.iter().map(|t| index[t.as_ref()]).collect();
        for (p, &i) in ids.iter().enumerate() {
            let lo = p.saturating_sub(window);
            let hi = (p + window + 1).min(ids.len());
            for (q, &j) in ids.iter().enumerate().take(hi).skip(lo) {
                if q != p && feature_of[j] != usize::MAX {
                    vectors[i][feature_of[j]] += 1.0;
                }
            }
        }
    }
    (items, vectors)
}
