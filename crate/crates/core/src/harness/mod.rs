//! Training loop, evaluation, synthetic corpora and the label-budget
//! experiment runner.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod synth;
pub mod train;

pub use config::{Method, Task, TrainConfig};
pub use experiment::{run_experiment, ExperimentPlan, ExperimentRow, ExperimentTable, SampleSize};
pub use metrics::{
    chunk_scores, class_scores, write_metrics, ChunkScores, ClassScores, MetricsRecord,
};
pub use synth::{gen_synthetic, write_synthetic, SynthCorpus, SynthSpec};
pub use train::{
    evaluate, load_trained, train, train_on, EvalResult, TrainData, TrainOutcome, Trained,
};
