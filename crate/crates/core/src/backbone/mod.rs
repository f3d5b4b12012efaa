//! 3D convolutional feature extractors: C3D, R3D and R(2+1)D.

mod config;
mod gradcheck;
mod model;

pub use config::{BackboneConfig, BackboneKind, Preset, CLIP_LEN, CROP_SIZE};
pub use gradcheck::{
    numeric_gradient_check, relative_error, CheckedParam, GradCheckOptions, GradCheckReport, LossHead,
};
pub use model::{factored_mid_channels, Backbone, ConvUnit, Forward, ForwardTape, Stage};
