use std::collections::HashMap;

use crate::error::{Error, Result};

/// Document frequencies and idf over a sentence corpus.
///
/// The score of token `t` inside sentence `s` is `count(t, s) · ln(N / df(t))`
/// with no smoothing. The corpus-level score of a token is the mean of that
/// quantity over the sentences containing it.
#[derive(Clone, Debug)]
pub struct TfidfTable {
    num_docs: usize,
    df: HashMap<String, usize>,
    corpus_score: HashMap<String, f64>,
}

pub fn build_tfidf<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<TfidfTable> {
    if corpus.is_empty() {
        return Err(Error::Data("TF-IDF needs a nonempty corpus".into()));
    }
    let n = corpus.len();
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut tf_sum: HashMap<String, usize> = HashMap::new();
    for sentence in corpus {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in sentence {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        for (t, c) in counts {
            *df.entry(t.to_string()).or_default() += 1;
            *tf_sum.entry(t.to_string()).or_default() += c;
        }
    }
    let corpus_score: HashMap<String, f64> = df
        .iter()
        .map(|(t, &d)| {
            let idf = (n as f64 / d as f64).ln();
            (t.clone(), tf_sum[t] as f64 * idf / d as f64)
        })
        .collect();
    let table = TfidfTable {
        num_docs: n,
        df,
        corpus_score,
    };
    if table.is_degenerate() {
        log::warn!("all TF-IDF scores are zero; importance sampling falls back to uniform");
    }
    Ok(table)
}

impl TfidfTable {
    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn df(&self, token: &str) -> Result<usize> {
        self.df
            .get(token)
            .copied()
            .ok_or_else(|| Error::Data(format!("token `{token}` not in TF-IDF table")))
    }

    pub fn idf(&self, token: &str) -> Result<f64> {
        Ok((self.num_docs as f64 / self.df(token)? as f64).ln())
    }

    /// Corpus-level score.
    pub fn score(&self, token: &str) -> Result<f64> {
        self.corpus_score
            .get(token)
            .copied()
            .ok_or_else(|| Error::Data(format!("token `{token}` not in TF-IDF table")))
    }

    /// Within-sentence score of each token of `tokens`.
    pub fn sentence_scores<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        tokens
            .iter()
            .map(|t| Ok(counts[t.as_ref()] as f64 * self.idf(t.as_ref())?))
            .collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.corpus_score.values().all(|&s| s == 0.0)
    }

    /// `(token, df, idf, corpus score)` rows sorted by token.
    pub fn rows(&self) -> Vec<(String, usize, f64, f64)> {
        let mut rows: Vec<_> = self
            .df
            .iter()
            .map(|(t, &d)| {
                let idf = (self.num_docs as f64 / d as f64).ln();
                (t.clone(), d, idf, self.corpus_score[t])
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }
}

const IMPORTANCE_EPS: f64 = 1e-3;

/// Sampling weights that favour low scores:
/// `w_i = (max s − s_i) + ε·(max s + 1)` with ε = 1e-3.
pub fn importance_weights_from_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Data(
            "importance weights need at least one token".into(),
        ));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = IMPORTANCE_EPS * (max + 1.0);
    Ok(scores.iter().map(|s| (max - s) + floor).collect())
}

/// [`importance_weights_from_scores`] over within-sentence TF-IDF scores.
pub fn importance_weights<S: AsRef<str>>(tokens: &[S], table: &TfidfTable) -> Result<Vec<f64>> {
    importance_weights_from_scores(&table.sentence_scores(tokens)?)
}
