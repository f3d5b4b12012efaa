//! Evaluation of a trained backbone: action-recognition fine-tuning,
//! nearest-neighbour retrieval, PCA embeddings and attention maps.

mod attention;
mod classify;
mod dataset;
mod pca;
mod retrieval;

pub use attention::{
    attention_from_tensor, attention_map, attention_overlays, overlay, stage_attention, AttentionMaps,
};
pub use classify::{
    accuracy_on, average_prediction, clip_starts, decode_video, finetune, predict_video, test_clips, Classifier,
    FinetuneConfig, FinetuneOutcome, FinetuneRecord, Prediction, TEST_CLIPS,
};
pub use dataset::{generate_action_dataset, ActionClass, ActionSetSpec, LabeledVideo, LabeledVideoDataset};
pub use pca::{pca_embed, write_scatter_svg, PcaEmbedding};
pub use retrieval::{
    descriptor_from_frames, extract_descriptor, extract_descriptors, retrieve, Distance, RetrievalMode, RetrievalTable,
    VideoDescriptor, DEFAULT_TOP_K,
};
