//! Siamese relation classifier: two evaluations of one backbone, a linear
//! head on the concatenated features, and the pretraining loop.

mod checkpoint;
mod config;
pub mod loss;
mod model;
mod pretrain;

pub use checkpoint::{export_single_stack, BackboneExport, Checkpoint, SiameseOptimizer, TensorArchive, ARCHIVE_MAGIC};
pub use config::{StopTarget, TrainConfig};
pub use loss::{
    argmax, batch_softmax_cross_entropy, cross_entropy, logsumexp, softmax, softmax_cross_entropy, BatchLoss,
};
pub use model::{PairForward, PairGradients, SiameseModel};
pub use pretrain::{
    evaluate, pretrain, train_step, validation_seed, EpochRecord, PretrainData, PretrainOutcome, RelationTally, Split,
    StepContext, StepMetrics,
};
