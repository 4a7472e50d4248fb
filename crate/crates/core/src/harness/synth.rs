//! Rule-generated review sentences with aspect and opinion tags.
//!
//! Sentences come from a small grammar over a ~50-word lexicon. Aspects are
//! drawn from a Zipfian distribution, so some occur rarely in a small
//! labeled sample. Every tag follows from the grammar, and the sentiment of
//! an aspect is the polarity of the opinion attached to it.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::Task;
use crate::corpus::{
    save_dataset, save_unlabeled, Dataset, Example, LabelVocab, Schema, SpanExample, TagVocab,
    TaggedSequence,
};
use crate::error::{Error, Result};
use crate::sampling::{categorical_sample, RngStream};

pub const ASPECTS: &[&[&str]] = &[
    &["food"],
    &["service"],
    &["staff"],
    &["pizza"],
    &["wine", "list"],
    &["pasta"],
    &["prices"],
    &["dessert"],
    &["waiter"],
    &["ambience"],
    &["sushi"],
    &["menu"],
    &["fish", "tacos"],
    &["coffee"],
    &["wine"],
];

/// Opinion words by class index (negative, neutral, positive).
pub const OPINIONS: [&[&str]; 3] = [
    &["bad", "slow", "rude", "cold", "awful", "overpriced"],
    &["average", "okay"],
    &["great", "good", "tasty", "friendly", "fresh", "amazing"],
];

pub const INTENSIFIERS: &[&str] = &["very", "too", "really"];

pub const CLASSES: [&str; 3] = ["negative", "neutral", "positive"];

/// Grammar templates. `A` is an aspect slot, `P` an opinion phrase slot.
pub const TEMPLATES: &[&str] = &[
    "the A was P",
    "the A is P",
    "P A",
    "the A was P but the A was P",
    "the A is P and the A is P",
    "our A was P",
    "we came here for the A and it was P",
    "we came here for the A",
    "this place is P",
    "the A here were P with our A",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SynthSpec {
    pub task: Task,
    pub labeled: usize,
    pub unlabeled: usize,
    pub dev: usize,
    pub test: usize,
    /// Exponent of the Zipfian aspect distribution.
    pub zipf: f64,
    /// Chance that an opinion phrase starts with an intensifier.
    pub intensifier: f64,
    /// Relative template frequencies, one per entry of [`TEMPLATES`].
    pub template_weights: Vec<f64>,
    /// Polarity priors in [`CLASSES`] order.
    pub class_priors: [f64; 3],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            task: Task::Tagging,
            labeled: 100,
            unlabeled: 2000,
            dev: 150,
            test: 500,
            zipf: 1.2,
            intensifier: 0.3,
            template_weights: vec![3.0, 2.0, 2.0, 1.5, 1.5, 1.0, 1.0, 0.5, 0.5, 0.5],
            class_priors: [0.3, 0.2, 0.5],
        }
    }
}

/// One generated sentence with its tags and, per aspect, the aspect span and
/// the polarity class of its opinion.
#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub template: usize,
    pub tokens: Vec<String>,
    pub tags: Vec<&'static str>,
    pub aspects: Vec<((usize, usize), Option<usize>)>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.template_weights.len() != TEMPLATES.len() {
            return Err(Error::Config(format!(
                "{} template weights for {} templates",
                self.template_weights.len(),
                TEMPLATES.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.intensifier) || !(self.zipf >= 0.0) {
            return Err(Error::Config(
                "intensifier must be in [0, 1] and zipf non-negative".into(),
            ));
        }
        if self.class_priors.iter().any(|&p| !(p >= 0.0))
            || self.class_priors.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(
                "class priors must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }

    fn aspect_weights(&self) -> Vec<f64> {
        (0..ASPECTS.len())
            .map(|r| 1.0 / ((r + 1) as f64).powf(self.zipf))
            .collect()
    }

    /// One sentence. For span classification, templates without a rated
    /// aspect are skipped.
    pub fn sentence(&self, rng: &mut RngStream) -> Result<Sentence> {
        let aspect_w = self.aspect_weights();
        loop {
            let template = categorical_sample(&self.template_weights, rng)?;
            // an opinion that precedes its aspect ("P A")
            let mut pending = None;
            let mut s = Sentence {
                template,
                tokens: Vec::new(),
                tags: Vec::new(),
                aspects: Vec::new(),
            };
            for word in TEMPLATES[template].split_whitespace() {
                match word {
                    "A" => {
                        let a = ASPECTS[categorical_sample(&aspect_w, rng)?];
                        let start = s.tokens.len();
                        for (i, w) in a.iter().enumerate() {
                            s.tokens.push(w.to_string());
                            s.tags.push(if i == 0 { "B-AS" } else { "I-AS" });
                        }
                        s.aspects
                            .push(((start, s.tokens.len() - 1), pending.take()));
                    }
                    "P" => {
                        let class = categorical_sample(&self.class_priors, rng)?;
                        let first = s.tokens.len();
                        if rng.random::<f64>() < self.intensifier {
                            s.tokens
                                .push(INTENSIFIERS[rng.random_range(0..INTENSIFIERS.len())].into());
                        }
                        let words = OPINIONS[class];
                        s.tokens
                            .push(words[rng.random_range(0..words.len())].into());
                        for i in first..s.tokens.len() {
                            s.tags.push(if i == first { "B-OP" } else { "I-OP" });
                        }
                        match s.aspects.iter_mut().rev().find(|a| a.1.is_none()) {
                            Some(a) => a.1 = Some(class),
                            None => pending = Some(class),
                        }
                    }
                    w => {
                        s.tokens.push(w.into());
                        s.tags.push("O");
                    }
                }
            }
            if self.task == Task::Tagging || s.aspects.iter().any(|a| a.1.is_some()) {
                return Ok(s);
            }
        }
    }
}

impl Sentence {
    pub fn to_example(&self, task: Task, rng: &mut RngStream) -> Result<Example> {
        match task {
            Task::Tagging => {
                let v = TagVocab::default();
                let tags = self
                    .tags
                    .iter()
                    .map(|t| {
                        v.index_of(t)
                            .expect("grammar tags are in the default vocabulary")
                    })
                    .collect();
                Ok(Example::Tagged(TaggedSequence::new(
                    self.tokens.clone(),
                    tags,
                    &v,
                )?))
            }
            Task::Spancls => {
                let rated: Vec<_> = self
                    .aspects
                    .iter()
                    .filter_map(|(s, c)| c.map(|c| (*s, c)))
                    .collect();
                if rated.is_empty() {
                    return Err(Error::Data("sentence has no rated aspect".into()));
                }
                let (span, class) = rated[rng.random_range(0..rated.len())];
                Ok(Example::Span(SpanExample::new(
                    self.tokens.clone(),
                    vec![span],
                    class,
                )?))
            }
        }
    }
}

/// The four splits of a generated corpus.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub labeled: Dataset,
    /// Unlabeled sentences; labels are placeholders, span tasks keep spans.
    pub unlabeled: Vec<Example>,
    pub dev: Dataset,
    pub test: Dataset,
}

pub fn synth_schema(task: Task) -> Schema {
    match task {
        Task::Tagging => Schema::Tagging(TagVocab::default()),
        Task::Spancls => Schema::SpanCls(LabelVocab::new(CLASSES).expect("three classes")),
    }
}

fn split(spec: &SynthSpec, rng: &RngStream, name: &str, n: usize) -> Result<Vec<Example>> {
    let mut r = rng.child(name, 0);
    (0..n)
        .map(|_| spec.sentence(&mut r)?.to_example(spec.task, &mut r))
        .collect()
}

/// Generates all splits. Each split has its own stream, so changing one
/// size leaves the other splits unchanged.
pub fn gen_synthetic(spec: &SynthSpec, rng: &RngStream) -> Result<SynthCorpus> {
    spec.validate()?;
    let schema = synth_schema(spec.task);
    let mut unlabeled = split(spec, rng, "unlabeled", spec.unlabeled)?;
    for ex in &mut unlabeled {
        match ex {
            Example::Tagged(t) => t.tags.iter_mut().for_each(|t| *t = 0),
            Example::Span(s) => s.label = 0,
        }
    }
    Ok(SynthCorpus {
        labeled: Dataset::new(schema.clone(), split(spec, rng, "labeled", spec.labeled)?),
        unlabeled,
        dev: Dataset::new(schema.clone(), split(spec, rng, "dev", spec.dev)?),
        test: Dataset::new(schema, split(spec, rng, "test", spec.test)?),
    })
}

pub const SYNTH_FILES: [&str; 4] = [
    "labeled.jsonl",
    "unlabeled.jsonl",
    "dev.jsonl",
    "test.jsonl",
];

pub fn write_synthetic(dir: &Path, corpus: &SynthCorpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_dataset(dir.join(SYNTH_FILES[0]), &corpus.labeled)?;
    save_unlabeled(dir.join(SYNTH_FILES[1]), &corpus.unlabeled)?;
    save_dataset(dir.join(SYNTH_FILES[2]), &corpus.dev)?;
    save_dataset(dir.join(SYNTH_FILES[3]), &corpus.test)?;
    Ok(())
}

/// Every word the grammar can produce.
pub fn lexicon() -> Vec<&'static str> {
    let mut words: Vec<&str> = TEMPLATES
        .iter()
        .flat_map(|t| t.split_whitespace())
        .filter(|w| *w != "A" && *w != "P")
        .chain(ASPECTS.iter().flat_map(|a| a.iter().copied()))
        .chain(OPINIONS.iter().flat_map(|o| o.iter().copied()))
        .chain(INTENSIFIERS.iter().copied())
        .collect();
    words.sort_unstable();
    words.dedup();
    words
}
