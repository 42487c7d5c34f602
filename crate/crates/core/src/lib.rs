//! Batch-softmax contrastive (BSC) training toolkit.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! toolkit: the loss family with analytic gradients, embedding normalization,
//! exact kNN search, batch-construction shuffles, k-means, a feature-hashed
//! Siamese text encoder, AdamW with linear warm-up, the training loop, and the
//! ranking/classification metrics used for evaluation.
//!
//! File formats, the command-line tool and thread-parallel execution live in
//! the `bsc-cli` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dense;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod knn;
pub mod losses;
pub mod normalization;
pub mod optim;
pub mod pfcc;
pub mod record;
pub mod shuffle;
pub mod synth;
pub mod text;
pub mod train;

pub use dense::{EmbeddingMatrix, Matrix, SimilarityMatrix};
pub use encoder::{EncoderModel, EncoderShape};
pub use error::{Error, Result};
pub use knn::{FlatIndex, Metric};
pub use losses::{LossConfig, LossOutput, LossVariant, PairBatch};
pub use normalization::NormalizationMode;
pub use record::{PairElement, PairRecord, Split};
pub use shuffle::{ShuffleConfig, ShuffleMode, ShuffledSequence};
pub use train::{TrainConfig, TrainRun};
