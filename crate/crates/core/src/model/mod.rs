//! Trainable encoder, output head, losses, optimizer and checkpoints.
//!
//! Gradients are computed by hand. A [`Tape`] records each forward pass;
//! encodings can then be mixed linearly (see [`EncodedBatch::sources`]) and
//! the gradient of any loss on the mixture flows back into every pass that
//! contributed, weighted by its coefficient.

mod checkpoint;
mod encoder;
mod gradcheck;
mod head;
mod linalg;
mod loss;
mod optim;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use gradcheck::{finite_diff_check, relative_error, GradCheck, FD_STEP};
pub(crate) use head::argmax;
pub use head::PredictionBatch;
pub use loss::{brier, cross_entropy, one_hot, LossOutput, SoftTargets};
pub use optim::{Adam, AdamConfig};
pub use params::{HeadKind, Model, ModelConfig};
pub use tape::{EncodedBatch, RowSource, Tape};

use crate::corpus::Batch;
use crate::error::Result;

impl Model {
    /// Gradient of a loss computed on `enc`: head, then back through the
    /// recorded passes. Adds into `grads`.
    pub fn backward_from_logits(
        &self,
        tape: &mut Tape,
        enc: &EncodedBatch,
        d_logits: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        let d_enc = self.head_backward(enc, d_logits, grads)?;
        tape.accumulate(enc, &d_enc)
    }

    /// Plain supervised cross-entropy on a labeled batch, with gradients.
    pub fn supervised_loss(&self, batch: &Batch, grads: &mut [f64]) -> Result<f64> {
        let mut tape = self.tape();
        let enc = self.encode(batch, &mut tape)?;
        let pred = self.predict(&enc)?;
        let targets = SoftTargets::from_labels(&batch.labels, self.config.num_classes);
        let out = cross_entropy(&pred, &targets)?;
        self.backward_from_logits(&mut tape, &enc, &out.d_logits, grads)?;
        tape.backward(self, grads);
        Ok(out.value)
    }

    /// Predictions without gradient tracking.
    pub fn predict_batch(&self, batch: &Batch) -> Result<PredictionBatch> {
        let enc = self.encode_frozen(batch)?;
        self.predict(&enc)
    }
}
