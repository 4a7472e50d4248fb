//! Small fixtures shared by unit tests.

use crate::corpus::{
    Dataset, Example, LabelVocab, Schema, SpanExample, TagVocab, TaggedSequence, TokenVocab,
};
use crate::model::{HeadKind, Model, ModelConfig};
use crate::sampling::RngStream;

pub fn tagged(text: &str, tags: &str) -> Example {
    let v = TagVocab::default();
    let toks: Vec<String> = text.split_whitespace().map(String::from).collect();
    let ids = tags
        .split_whitespace()
        .map(|t| v.index_of(t).unwrap())
        .collect();
    Example::Tagged(TaggedSequence::new(toks, ids, &v).unwrap())
}

pub fn tagging_data() -> Dataset {
    Dataset::new(
        Schema::Tagging(TagVocab::default()),
        vec![
            tagged("the food was average at best", "O B-AS O B-OP I-OP I-OP"),
            tagged("great service", "B-OP B-AS"),
            tagged(
                "the wine list is too short for us",
                "O B-AS I-AS O B-OP I-OP O O",
            ),
            tagged("we loved the pasta", "O B-OP O B-AS"),
        ],
    )
}

pub fn span_data() -> Dataset {
    let labels = LabelVocab::new(["negative", "neutral", "positive"]).unwrap();
    let ex = |t: &str, s: (usize, usize), l| {
        Example::Span(
            SpanExample::new(t.split_whitespace().map(String::from).collect(), vec![s], l).unwrap(),
        )
    };
    Dataset::new(
        Schema::SpanCls(labels),
        vec![
            ex("the food was great", (1, 1), 2),
            ex("the service was slow", (1, 1), 0),
            ex("the wine list is fine", (1, 2), 1),
        ],
    )
}

pub fn small_config(vocab: &TokenVocab, schema: &Schema, max_len: usize) -> ModelConfig {
    let head = if schema.is_tagging() {
        HeadKind::Tagging
    } else {
        HeadKind::SpanCls
    };
    let mut c = ModelConfig::new(vocab.len(), max_len, schema.num_classes(), head);
    c.dim = 8;
    c.ff_dim = 12;
    c.layers = 2;
    c
}

pub fn model_for(data: &Dataset, max_len: usize, seed: u64) -> (TokenVocab, Model) {
    let vocab = TokenVocab::build(data.sentences());
    let config = small_config(&vocab, &data.schema, max_len);
    let model = Model::new(config, &mut RngStream::new(seed)).unwrap();
    (vocab, model)
}

pub struct Tables {
    pub schema: Schema,
    pub tfidf: crate::sampling::TfidfTable,
    pub words: crate::sampling::SimilarityIndex,
    pub spans: crate::sampling::SpanTable,
}

impl Tables {
    pub fn new(data: &Dataset) -> Self {
        let sents: Vec<Vec<String>> = data.sentences().map(<[String]>::to_vec).collect();
        let (items, vecs) = crate::sampling::cooccurrence_embeddings(&sents, 2, 512);
        Self {
            schema: data.schema.clone(),
            tfidf: crate::sampling::build_tfidf(&sents).unwrap(),
            words: crate::sampling::SimilarityIndex::new(items, vecs).unwrap(),
            spans: crate::sampling::build_span_table(data).unwrap(),
        }
    }

    pub fn get(&self) -> crate::augment::AugmentTables<'_> {
        crate::augment::AugmentTables {
            schema: &self.schema,
            tfidf: Some(&self.tfidf),
            words: Some(&self.words),
            spans: Some(&self.spans),
            polarity: None,
        }
    }
}
