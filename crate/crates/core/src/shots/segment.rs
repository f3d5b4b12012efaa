use serde::{Deserialize, Serialize};

use super::detect::Shot;
use crate::error::{input_err, Result};

pub const DEFAULT_SEGMENT_LEN: usize = 300;
pub const DEFAULT_MIN_LEN: usize = 48;

/// A single-shot slice `[start, end)` of a video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub video_id: String,
    pub shot_id: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn segment_id(shot_id: &str, index: usize) -> String {
    format!("{shot_id}/g{index:03}")
}

/// Full windows `[b + iK, b + (i+1)K)` with `b + (i+1)K <= e`, then the
/// remaining tail when it has at least `min_len` frames.
pub fn segment_shot(shot: &Shot, k: usize, min_len: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut push = |start: usize, end: usize| {
        let index = out.len();
        out.push(Segment {
            segment_id: segment_id(&shot.shot_id, index),
            video_id: shot.video_id.clone(),
            shot_id: shot.shot_id.clone(),
            start,
            end,
        })
    };
    let mut start = shot.begin;
    while start + k <= shot.end {
        push(start, start + k);
        start += k;
    }
    if shot.end - start >= min_len && start < shot.end {
        push(start, shot.end);
    }
    out
}

pub fn segment_shots(shots: &[Shot], k: usize, min_len: usize) -> Result<Vec<Segment>> {
    if min_len == 0 || k <= min_len {
        return Err(input_err!(
            "segmenting needs K > min_len > 0, got K={k}, min_len={min_len}"
        ));
    }
    Ok(shots.iter().flat_map(|s| segment_shot(s, k, min_len)).collect())
}
