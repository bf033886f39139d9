//! Recurrent encoder-decoder with additive attention, trained by plain SGD.

pub mod attention;
pub mod bucket;
pub mod gradcheck;
pub mod gru;
pub mod linalg;
mod model;
pub mod train;
pub mod vocab;

use serde::{Deserialize, Serialize};

pub use bucket::{pad_to_bucket, strip_padding, BucketConfig, BucketError};
pub use gradcheck::{gradient_check, relative_error, Differentiable, GradCheckReport, PairObjective};
pub use linalg::Tensor;
pub use model::{DropoutMasks, Encoded, Example, Seq2SeqModel, SoftmaxMode};
pub use train::{train, TrainConfig, TrainError, TrainReport};
pub use vocab::{VocabError, Vocabulary, EOS, GO, PAD, RESERVED, UNK};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("tensor `{name}` has shape {got:?}, expected {expected:?}")]
    TensorMismatch {
        name: alloc::string::String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite value")]
    NonFinite,
    #[error("empty input sequence")]
    EmptyInput,
    #[error("context of {len} tokens exceeds the largest bucket ({max})")]
    ContextTooLong { len: usize, max: usize },
    #[error(transparent)]
    Vocab(VocabError),
}

/// Model shape. Decoder width is twice the per-direction encoder width so
/// the bridge and attention read concatenated bidirectional states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqConfig {
    pub layers: usize,
    /// Encoder hidden units per direction.
    pub hidden: usize,
    pub embed: usize,
    /// Attention projection width; the decoder width when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<usize>,
    pub init_scale: f64,
    pub seed: u64,
    pub buckets: BucketConfig,
}

fn default_init_scale() -> f64 {
    0.1
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl Seq2SeqConfig {
    /// One layer, 64 units per direction, 32-wide embeddings.
    pub fn desk() -> Self {
        Seq2SeqConfig {
            layers: 1,
            hidden: 64,
            embed: 32,
            attention: None,
            init_scale: default_init_scale(),
            seed: 0,
            buckets: BucketConfig::default(),
        }
    }

    /// Three layers of 512 units per direction.
    pub fn production() -> Self {
        Seq2SeqConfig {
            layers: 3,
            hidden: 512,
            embed: 512,
            ..Self::desk()
        }
    }

    pub fn decoder_width(&self) -> usize {
        2 * self.hidden
    }

    pub fn attention_width(&self) -> usize {
        self.attention.unwrap_or(self.decoder_width())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 || self.hidden == 0 || self.embed == 0 || self.attention == Some(0) {
            return Err(ModelError::Config("layers, widths and embedding size must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(ModelError::Config("init_scale must be positive"));
        }
        Ok(())
    }
}
