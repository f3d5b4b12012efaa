//! Decoding, canonical resizing and synthetic corpus generation.

mod frame;
mod raw;
mod synth;

pub use frame::{resize_bilinear, resize_frame, to_gray, Frame, FrameSequence, GrayImage, FRAME_HEIGHT, FRAME_WIDTH};
pub use raw::{
    discover_videos, write_archive, ArchiveMeta, DecodeConfig, RawVideo, SourceFormat, ARCHIVE_FRAMES, ARCHIVE_META,
};
pub use synth::{
    generate_synthetic_corpus, palette, plan_video, read_ground_truth, render_video, write_ground_truth,
    GroundTruthShot, MotionKind, PatternStyle, ShotParams, SyntheticCorpus, SyntheticCorpusSpec, GROUND_TRUTH_FILE,
};
