use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};

use crate::backbone::Backbone;
use crate::error::{input_err, Result};
use crate::nn::{NormMode, Tensor5};
use crate::relations::frames_to_tensor;
use crate::video::Frame;

/// Per-frame spatial attention, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaps {
    pub height: usize,
    pub width: usize,
    /// One row-major `height x width` map per time step.
    pub maps: Vec<Vec<f64>>,
}

/// Sum of absolute activations over channels at every position, then
/// min-max normalized per time step. A constant frame maps to all zeros.
///
/// `activations` is one sample laid out `[C, T, H, W]`.
pub fn attention_map(activations: &[f64], dims: [usize; 4]) -> Result<AttentionMaps> {
    let [c, t, h, w] = dims;
    if c * t * h * w == 0 {
        return Err(input_err!("empty activation block {dims:?}"));
    }
    if activations.len() != c * t * h * w {
        return Err(input_err!(
            "activation block has {} values, dims {dims:?} need {}",
            activations.len(),
            c * t * h * w
        ));
    }
    let plane = h * w;
    let mut maps = vec![vec![0.0; plane]; t];
    for ch in 0..c {
        for (ti, map) in maps.iter_mut().enumerate() {
            let src = &activations[(ch * t + ti) * plane..(ch * t + ti + 1) * plane];
            for (m, a) in map.iter_mut().zip(src) {
                *m += a.abs();
            }
        }
    }
    for map in &mut maps {
        let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for m in map.iter_mut() {
            *m = if range > 0.0 && range.is_finite() {
                (*m - lo) / range
            } else {
                0.0
            };
        }
    }
    Ok(AttentionMaps {
        height: h,
        width: w,
        maps,
    })
}

/// Attention maps of one sample of a `[B, C, T, H, W]` activation tensor.
pub fn attention_from_tensor(x: &Tensor5, sample: usize) -> Result<AttentionMaps> {
    let [b, c, t, h, w] = x.dims();
    if sample >= b {
        return Err(input_err!("sample {sample} out of range for batch {b}"));
    }
    attention_map(x.sample(sample), [c, t, h, w])
}

/// Attention of a backbone stage (1-based) for one clip.
pub fn stage_attention(backbone: &Backbone, clip: &[Frame], stage: usize) -> Result<AttentionMaps> {
    if stage == 0 || stage > backbone.stages().len() {
        return Err(input_err!(
            "stage must lie in 1..={}, got {stage}",
            backbone.stages().len()
        ));
    }
    let fwd = backbone.forward(&frames_to_tensor(&[clip])?, NormMode::Frozen)?;
    attention_from_tensor(fwd.tape.stage_output(stage - 1), 0)
}

/// Blends a heat map onto `frame`, upsampling the map to frame size.
pub fn overlay(frame: &Frame, map: &[f64], map_height: usize, map_width: usize, alpha: f64) -> Result<Frame> {
    if map.len() != map_height * map_width || map.is_empty() {
        return Err(input_err!("map buffer does not match {map_height}x{map_width}"));
    }
    let gray: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        map_width as u32,
        map_height as u32,
        map.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
    )
    .expect("buffer sized for map");
    let up = imageops::resize(&gray, frame.width(), frame.height(), FilterType::Triangle);
    let mut out = frame.clone();
    for (p, m) in out.pixels_mut().zip(up.pixels()) {
        let heat = heat_color(f64::from(m[0]) / 255.0);
        *p = Rgb(std::array::from_fn(|c| {
            ((1.0 - alpha) * f64::from(p[c]) + alpha * heat[c])
                .round()
                .clamp(0.0, 255.0) as u8
        }));
    }
    Ok(out)
}

/// Black through red and yellow to white.
fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0) * 3.0;
    [v.min(1.0), (v - 1.0).clamp(0.0, 1.0), (v - 2.0).clamp(0.0, 1.0)].map(|c| c * 255.0)
}

/// One overlay per input frame; frame `i` uses stage time step `i * T' / T`.
pub fn attention_overlays(backbone: &Backbone, clip: &[Frame], stage: usize, alpha: f64) -> Result<Vec<Frame>> {
    let maps = stage_attention(backbone, clip, stage)?;
    let steps = maps.maps.len();
    clip.iter()
        .enumerate()
        .map(|(i, f)| overlay(f, &maps.maps[i * steps / clip.len()], maps.height, maps.width, alpha))
        .collect()
}
