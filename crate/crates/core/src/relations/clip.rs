use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transform::{rotate_frame, TransformDescriptor};
use crate::backbone::{CLIP_LEN, CROP_SIZE};
use crate::error::{input_err, Error, Result};
use crate::nn::Tensor5;
use crate::video::{Frame, FRAME_HEIGHT, FRAME_WIDTH};

/// Per-channel normalization applied when clips enter the network.
pub const PIXEL_MEAN: f64 = 0.45;
pub const PIXEL_STD: f64 = 0.225;

/// Where a clip's frames come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipProvenance {
    pub segment_id: String,
    pub video_id: String,
    pub shot_id: String,
    /// Absolute frame index of the segment start.
    pub segment_start: usize,
    /// Offset of the first clip frame within the (possibly transformed)
    /// segment frame list.
    pub start_offset: usize,
    /// Segment-relative source frame of every clip position, in display order.
    pub frame_indices: Vec<usize>,
    /// Top-left `[y, x]` of the crop window shared by all frames.
    pub crop: [usize; 2],
}

impl ClipProvenance {
    pub fn absolute_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frame_indices.iter().map(|i| self.segment_start + i)
    }
}

/// Everything needed to materialize a clip without pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPlan {
    pub provenance: ClipProvenance,
    pub transform: TransformDescriptor,
}

/// `k` cropped frames plus the provenance and transform that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub provenance: ClipProvenance,
    pub transform: TransformDescriptor,
}

impl Clip {
    pub fn plan(&self) -> ClipPlan {
        ClipPlan {
            provenance: self.provenance.clone(),
            transform: self.transform.clone(),
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.frames.len() != CLIP_LEN {
            return Err(input_err!("clip has {} frames, expected {CLIP_LEN}", self.frames.len()));
        }
        if let Some(f) = self
            .frames
            .iter()
            .find(|f| f.width() as usize != CROP_SIZE || f.height() as usize != CROP_SIZE)
        {
            return Err(input_err!(
                "clip frame is {}x{}, expected {CROP_SIZE}x{CROP_SIZE}",
                f.height(),
                f.width()
            ));
        }
        Ok(())
    }
}

/// Uniform start offset for `k` contiguous entries of a list of `available`.
pub fn draw_offset<R: Rng>(available: usize, k: usize, rng: &mut R) -> Result<usize> {
    if available < k {
        return Err(Error::NotSatisfiable(format!(
            "{available} frames cannot hold a {k}-frame clip"
        )));
    }
    Ok(rng.gen_range(0..=available - k))
}

/// Uniform crop window of `CROP_SIZE` inside a canonical frame.
pub fn draw_crop<R: Rng>(rng: &mut R) -> [usize; 2] {
    [
        rng.gen_range(0..=FRAME_HEIGHT - CROP_SIZE),
        rng.gen_range(0..=FRAME_WIDTH - CROP_SIZE),
    ]
}

/// Centered crop window, used at test time.
pub fn center_crop() -> [usize; 2] {
    [(FRAME_HEIGHT - CROP_SIZE) / 2, (FRAME_WIDTH - CROP_SIZE) / 2]
}

/// Chooses `k` contiguous entries of `source` (segment-relative frame
/// indices, possibly already inverted, shuffled or dilated) at a uniform
/// offset, and a crop window.
pub fn extract_clip_indices<R: Rng>(source: &[usize], k: usize, rng: &mut R) -> Result<(usize, Vec<usize>)> {
    let start = draw_offset(source.len(), k, rng)?;
    Ok((start, source[start..start + k].to_vec()))
}

pub fn crop_frame(frame: &Frame, crop: [usize; 2], size: usize) -> Result<Frame> {
    let [y, x] = crop;
    if y + size > frame.height() as usize || x + size > frame.width() as usize {
        return Err(input_err!(
            "crop {size}x{size} at ({y}, {x}) exceeds {}x{} frame",
            frame.height(),
            frame.width()
        ));
    }
    Ok(image::imageops::crop_imm(frame, x as u32, y as u32, size as u32, size as u32).to_image())
}

/// Builds a clip from decoded canonical frames (one per planned index, in
/// display order): crop, then apply the clip-level rotation if any.
pub fn assemble_clip(plan: &ClipPlan, frames: &[Frame]) -> Result<Clip> {
    if frames.len() != plan.provenance.frame_indices.len() {
        return Err(input_err!(
            "{} frames supplied for {} planned positions",
            frames.len(),
            plan.provenance.frame_indices.len()
        ));
    }
    let mut out = frames
        .iter()
        .map(|f| crop_frame(f, plan.provenance.crop, CROP_SIZE))
        .collect::<Result<Vec<_>>>()?;
    if let TransformDescriptor::Rotate { angle } = plan.transform {
        out = out.iter().map(|f| rotate_frame(f, angle)).collect::<Result<Vec<_>>>()?;
    }
    Ok(Clip {
        frames: out,
        provenance: plan.provenance.clone(),
        transform: plan.transform.clone(),
    })
}

/// Stacks clips into a `[B, 3, T, H, W]` tensor with `(v/255 - mean)/std`
/// normalization.
pub fn frames_to_tensor(clips: &[&[Frame]]) -> Result<Tensor5> {
    let first = clips
        .first()
        .and_then(|c| c.first())
        .ok_or_else(|| input_err!("cannot build a tensor from no clips"))?;
    let (t, h, w) = (clips[0].len(), first.height() as usize, first.width() as usize);
    let volume = t * h * w;
    let mut data = vec![0.0; clips.len() * 3 * volume];
    for (b, clip) in clips.iter().enumerate() {
        if clip.len() != t {
            return Err(input_err!("clips in a batch must share a length"));
        }
        for (ti, frame) in clip.iter().enumerate() {
            if frame.height() as usize != h || frame.width() as usize != w {
                return Err(input_err!("frames in a batch must share a size"));
            }
            for (i, p) in frame.pixels().enumerate() {
                for c in 0..3 {
                    data[((b * 3 + c) * t + ti) * h * w + i] = (f64::from(p[c]) / 255.0 - PIXEL_MEAN) / PIXEL_STD;
                }
            }
        }
    }
    Ok(Tensor5::from_vec([clips.len(), 3, t, h, w], data))
}

pub fn clips_to_tensor(clips: &[&Clip]) -> Result<Tensor5> {
    let frames: Vec<&[Frame]> = clips.iter().map(|c| c.frames.as_slice()).collect();
    frames_to_tensor(&frames)
}
