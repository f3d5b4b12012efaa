use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hog::{frame_difference, hog_descriptor, HogParams};
use crate::error::{input_err, Result};
use crate::video::{to_gray, RawVideo};

/// Frames decoded per chunk while scanning a video.
const SCAN_CHUNK: usize = 64;

/// A maximal run of frames `[begin, end)` without a detected cut.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: String,
    pub video_id: String,
    pub begin: usize,
    pub end: usize,
}

impl Shot {
    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.begin
    }
}

pub fn shot_id(video_id: &str, index: usize) -> String {
    format!("{video_id}/s{index:03}")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Cut wherever the difference exceeds this value.
    Fixed(f64),
    /// Per-video `max(mean + sigmas * std, floor)` of the difference series.
    Adaptive { sigmas: f64, floor: f64 },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Adaptive {
            sigmas: 3.0,
            floor: 0.03,
        }
    }
}

impl Threshold {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Fixed(t) if !(t > 0.0) => Err(input_err!("fixed threshold must be positive, got {t}")),
            Threshold::Adaptive { sigmas, floor } if !(sigmas >= 0.0) || !(floor >= 0.0) => {
                Err(input_err!("adaptive threshold needs non-negative sigmas and floor"))
            }
            _ => Ok(()),
        }
    }

    /// Resolves the threshold for one difference series.
    pub fn resolve(&self, series: &[f64]) -> f64 {
        match *self {
            Threshold::Fixed(t) => t,
            Threshold::Adaptive { sigmas, floor } => {
                if series.is_empty() {
                    return f64::INFINITY;
                }
                let n = series.len() as f64;
                let mean = series.iter().sum::<f64>() / n;
                let var = series.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
                (mean + sigmas * var.sqrt()).max(floor)
            }
        }
    }
}

/// `series[t - 1]` is the difference between frames `t - 1` and `t`.
pub fn difference_series(video: &RawVideo, params: &HogParams) -> Result<Vec<f64>> {
    if video.frame_count == 0 {
        return Err(input_err!("video {} has no frames", video.video_id));
    }
    let mut series = Vec::with_capacity(video.frame_count - 1);
    let mut previous: Option<Vec<f64>> = None;
    let mut start = 0;
    while start < video.frame_count {
        let end = (start + SCAN_CHUNK).min(video.frame_count);
        let frames = video.decode_frames(start..end)?;
        let descriptors = frames
            .frames()
            .par_iter()
            .map(|f| hog_descriptor(&to_gray(f), params))
            .collect::<Result<Vec<_>>>()?;
        for d in descriptors {
            if let Some(p) = &previous {
                series.push(frame_difference(p, &d)?);
            }
            previous = Some(d);
        }
        start = end;
    }
    Ok(series)
}

/// Splits `[0, frame_count)` at every `t` with `series[t - 1] > threshold`.
pub fn shots_from_series(video_id: &str, frame_count: usize, series: &[f64], threshold: f64) -> Vec<Shot> {
    let mut shots = Vec::new();
    let mut begin = 0;
    for (i, d) in series.iter().enumerate() {
        let t = i + 1;
        if *d > threshold {
            shots.push(Shot {
                shot_id: shot_id(video_id, shots.len()),
                video_id: video_id.to_string(),
                begin,
                end: t,
            });
            begin = t;
        }
    }
    shots.push(Shot {
        shot_id: shot_id(video_id, shots.len()),
        video_id: video_id.to_string(),
        begin,
        end: frame_count,
    });
    shots
}

pub fn detect_shot_changes(video: &RawVideo, threshold: &Threshold, params: &HogParams) -> Result<Vec<Shot>> {
    threshold.validate()?;
    let series = difference_series(video, params)?;
    Ok(shots_from_series(
        &video.video_id,
        video.frame_count,
        &series,
        threshold.resolve(&series),
    ))
}
