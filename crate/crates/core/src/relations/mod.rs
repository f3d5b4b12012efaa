//! Relation-labeled clip pairs: partner selection, transforms, clip extraction.

mod category;
mod clip;
mod index;
mod loader;
mod sampler;
mod transform;

pub use category::{RelationCategory, RelationSet};
pub use clip::{
    assemble_clip, center_crop, clips_to_tensor, crop_frame, draw_crop, draw_offset, extract_clip_indices,
    frames_to_tensor, Clip, ClipPlan, ClipProvenance, PIXEL_MEAN, PIXEL_STD,
};
pub use index::{SampleIndex, SampleIndexHeader};
pub use loader::FrameLoader;
pub use sampler::{
    check_satisfiable, make_sample, make_sample_plan, materialize, plan_pair, plan_stream, sample_anchor,
    sample_partner_cooccurrence, verify_label, RelationSample, SamplePlan, SamplerConfig, StreamStats,
};
pub use transform::{
    dilate_segment, eligible_intervals, invert_segment_frames, is_identity, is_permutation, is_reversal,
    random_permutation, rank_permutation, rotate_clip, rotate_frame, shuffle_frames, unshuffle, TransformDescriptor,
    DILATION_INTERVALS, ROTATION_ANGLES,
};
