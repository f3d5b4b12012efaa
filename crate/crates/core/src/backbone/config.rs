use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLIP_LEN: usize = 16;
pub const CROP_SIZE: usize = 112;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Five plain blocks of 3x3x3 convolution, batch norm and ReLU.
    C3d,
    /// Five residual blocks, each with two 3x3x3 convolutions.
    R3d,
    /// R3D with every 3x3x3 convolution factored into 1x3x3 spatial and
    /// 3x1x1 temporal convolutions.
    R2plus1d,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::C3d => "c3d",
            BackboneKind::R3d => "r3d",
            BackboneKind::R2plus1d => "r2plus1d",
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c3d" => Ok(BackboneKind::C3d),
            "r3d" => Ok(BackboneKind::R3d),
            "r2plus1d" | "r(2+1)d" | "r21d" => Ok(BackboneKind::R2plus1d),
            other => Err(Error::Config(format!("unknown backbone kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

/// Architecture description. Everything that influences tensor shapes lives
/// here, so two backbones with equal configs accept each other's parameters.
///
/// Downsampling schedule (padding is always `kernel / 2`):
///
/// | preset | input pool | stage strides (t,h,w)                      | stage-5 grid |
/// |--------|------------|--------------------------------------------|--------------|
/// | full   | 1x1x1      | (1,2,2) (2,2,2) (2,2,2) (2,2,2) (2,2,2)     | 1 x 4 x 4    |
/// | tiny   | 1x2x2      | (1,2,2) (2,2,2) (2,2,2) (2,2,2) (2,2,2)     | 1 x 2 x 2    |
///
/// The tiny preset averages 2x2 pixel blocks before the first convolution so
/// the whole network runs at a quarter of the spatial cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub block_widths: [usize; 5],
    pub input_pool: [usize; 3],
    pub strides: [[usize; 3]; 5],
    /// `[channels, frames, height, width]`
    pub input_shape: [usize; 4],
}

const STRIDES: [[usize; 3]; 5] = [[1, 2, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2]];

impl BackboneConfig {
    pub fn full(kind: BackboneKind) -> Self {
        Self {
            kind,
            block_widths: [64, 128, 256, 512, 512],
            input_pool: [1, 1, 1],
            strides: STRIDES,
            input_shape: [3, CLIP_LEN, CROP_SIZE, CROP_SIZE],
        }
    }

    pub fn tiny(kind: BackboneKind) -> Self {
        Self {
            kind,
            block_widths: [8, 16, 32, 64, 64],
            input_pool: [1, 2, 2],
            strides: STRIDES,
            input_shape: [3, CLIP_LEN, CROP_SIZE, CROP_SIZE],
        }
    }

    pub fn preset(kind: BackboneKind, preset: Preset) -> Self {
        match preset {
            Preset::Tiny => Self::tiny(kind),
            Preset::Full => Self::full(kind),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.block_widths[4]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.block_widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("block width {i} is zero")));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Config("input shape has a zero dimension".into()));
        }
        if self
            .input_pool
            .iter()
            .chain(self.strides.iter().flatten())
            .any(|&s| s == 0)
        {
            return Err(Error::Config("pooling windows and strides must be positive".into()));
        }
        let pooled = self.pooled_volume();
        if pooled.contains(&0) {
            return Err(Error::Config("input pooling leaves an empty volume".into()));
        }
        Ok(())
    }

    /// Volume after the fixed input pooling.
    pub fn pooled_volume(&self) -> [usize; 3] {
        let [_, t, h, w] = self.input_shape;
        [t / self.input_pool[0], h / self.input_pool[1], w / self.input_pool[2]]
    }

    /// Output volume of every stage for the declared input shape.
    pub fn stage_volumes(&self) -> [[usize; 3]; 5] {
        let mut v = self.pooled_volume();
        let mut out = [[0; 3]; 5];
        for (slot, stride) in out.iter_mut().zip(&self.strides) {
            // kernel 3, pad 1 along every strided axis
            for a in 0..3 {
                v[a] = crate::nn::conv_out_len(v[a], 3, stride[a], 1);
            }
            *slot = v;
        }
        out
    }
}
