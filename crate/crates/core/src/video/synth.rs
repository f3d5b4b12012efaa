//! Deterministic synthetic corpora with known shot boundaries.
//!
//! Every shot renders a plaid of two perpendicular gratings. Within a shot the
//! plaid moves smoothly (translation or rotation, or not at all); at a cut the
//! orientation jumps by about 45 degrees and periods, phases and tint change,
//! which produces a large gradient-histogram difference between the two frames.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::Frame;
use super::raw::{write_archive, RawVideo};
use crate::error::{input_err, Error, Result};
use crate::seed;

/// Ground-truth file written next to the generated archives.
pub const GROUND_TRUTH_FILE: &str = "shots.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Translating,
    Rotating,
    Static,
}

/// Rendering regime of a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternStyle {
    /// Random motion per shot drawn from the allowed kinds.
    #[default]
    Standard,
    /// One translation direction and speed everywhere, a strong top-bright
    /// vertical ramp and well separated per-video palettes. Playback
    /// direction, speed, frame order and orientation are visible in every
    /// single clip.
    Easy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub num_videos: usize,
    /// Inclusive `[min, max]` shot count per video.
    pub shots_per_video: [usize; 2],
    /// Inclusive `[min, max]` frames per shot.
    pub shot_length_range: [usize; 2],
    /// Motion kinds a shot may draw from (ignored by [`PatternStyle::Easy`]).
    pub motion_kinds: Vec<MotionKind>,
    pub style: PatternStyle,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            num_videos: 4,
            shots_per_video: [2, 4],
            shot_length_range: [60, 200],
            motion_kinds: vec![MotionKind::Translating, MotionKind::Rotating, MotionKind::Static],
            style: PatternStyle::Standard,
            height: 128,
            width: 171,
            fps: 25.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let [smin, smax] = self.shots_per_video;
        let [lmin, lmax] = self.shot_length_range;
        if self.num_videos == 0 {
            return Err(input_err!("synthetic corpus needs at least one video"));
        }
        if smin == 0 || smin > smax {
            return Err(input_err!("empty shots_per_video range [{smin}, {smax}]"));
        }
        if lmin == 0 || lmin > lmax {
            return Err(input_err!("empty shot_length_range [{lmin}, {lmax}]"));
        }
        if self.motion_kinds.is_empty() && self.style == PatternStyle::Standard {
            return Err(input_err!("no motion kinds allowed"));
        }
        if self.height == 0 || self.width == 0 || !(self.fps > 0.0) {
            return Err(input_err!("frame size and fps must be positive"));
        }
        Ok(())
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("synth{index:04}")
    }
}

/// One line of the ground-truth table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthShot {
    pub video_id: String,
    pub begin_frame: usize,
    pub end_frame: usize,
}

/// Complete appearance and motion description of one rendered shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotParams {
    pub motion: MotionKind,
    /// Orientation of the first grating at the first frame, degrees.
    pub angle: f64,
    /// Periods of the two gratings, pixels.
    pub periods: [f64; 2],
    pub phases: [f64; 2],
    /// Translation per frame `(dx, dy)` in pixels.
    pub velocity: [f64; 2],
    /// Rotation per frame, degrees.
    pub angular_velocity: f64,
    /// Per-channel gain in `(0, 1]`.
    pub color: [f64; 3],
    /// Fractional darkening from the top row to the bottom row.
    pub ramp: f64,
    /// Amplitude of the first grating around mid-grey.
    pub contrast: f64,
    /// Amplitude of the second grating relative to the first. A weak second
    /// grating keeps the orientation histogram peaked, so a cut moves most of
    /// the gradient mass to other bins.
    pub secondary: f64,
}

impl ShotParams {
    /// Grating orientation at local frame `t`.
    pub fn angle_at(&self, t: usize) -> f64 {
        match self.motion {
            MotionKind::Rotating => self.angle + self.angular_velocity * t as f64,
            _ => self.angle,
        }
    }

    /// Renders local frame `t` of the shot.
    pub fn render(&self, t: usize, height: usize, width: usize) -> Frame {
        let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
        let theta = self.angle_at(t).to_radians();
        let (s, c) = theta.sin_cos();
        let (ox, oy) = match self.motion {
            MotionKind::Translating => (self.velocity[0] * t as f64, self.velocity[1] * t as f64),
            _ => (0.0, 0.0),
        };
        let k1 = 2.0 * PI / self.periods[0];
        let k2 = 2.0 * PI / self.periods[1];
        let mut out = vec![0u8; height * width * 3];
        for y in 0..height {
            let py = y as f64 - cy - oy;
            let shade = 1.0 - self.ramp * y as f64 / (height.max(2) - 1) as f64;
            for x in 0..width {
                let px = x as f64 - cx - ox;
                let u = px * c + py * s;
                let v = -px * s + py * c;
                let g = 0.5
                    + self.contrast
                        * ((k1 * u + self.phases[0]).cos() + self.secondary * (k2 * v + self.phases[1]).cos());
                let value = g * shade;
                let o = (y * width + x) * 3;
                for ch in 0..3 {
                    out[o + ch] = (255.0 * value * self.color[ch]).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Frame::from_raw(width as u32, height as u32, out).expect("buffer sized for frame")
    }

    pub fn render_all(&self, frames: usize, height: usize, width: usize) -> Vec<Frame> {
        (0..frames).map(|t| self.render(t, height, width)).collect()
    }
}

/// Maps a hue in `[0, 1)` to an RGB gain vector with every channel in `[0.35, 1]`.
pub fn palette(hue: f64) -> [f64; 3] {
    let rgb = |offset: f64| 0.675 + 0.325 * (2.0 * PI * (hue + offset)).cos();
    [rgb(0.0), rgb(1.0 / 3.0), rgb(2.0 / 3.0)]
}

fn video_hue(index: usize) -> f64 {
    // Golden-ratio stepping keeps consecutive videos far apart on the hue circle.
    (index as f64 * 0.618_033_988_749_895).fract()
}

/// Shot plan of one video: parameters plus lengths.
pub fn plan_video(spec: &SyntheticCorpusSpec, index: usize) -> Vec<(ShotParams, usize)> {
    let mut rng = seed::rng(seed::mix(spec.seed, index as u64));
    let [smin, smax] = spec.shots_per_video;
    let [lmin, lmax] = spec.shot_length_range;
    let shots = rng.gen_range(smin..=smax);
    let base = palette(video_hue(index));
    let easy = spec.style == PatternStyle::Easy;
    let mut angle: f64 = rng.gen_range(0.0..180.0);
    let mut plan = Vec::with_capacity(shots);
    for _ in 0..shots {
        let len = rng.gen_range(lmin..=lmax);
        let motion = if easy {
            MotionKind::Translating
        } else {
            spec.motion_kinds[rng.gen_range(0..spec.motion_kinds.len())]
        };
        let (velocity, angular_velocity) = if easy {
            ([1.0, 0.0], 0.0)
        } else {
            let dir: f64 = rng.gen_range(0.0..2.0 * PI);
            let speed = rng.gen_range(0.3..0.7);
            let omega = rng.gen_range(0.2..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            ([speed * dir.cos(), speed * dir.sin()], omega)
        };
        let tint = rng.gen_range(0.85..1.0);
        let params = ShotParams {
            motion,
            angle,
            periods: [rng.gen_range(20.0..36.0), rng.gen_range(20.0..36.0)],
            phases: [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)],
            velocity,
            angular_velocity,
            color: base.map(|c| c * tint),
            ramp: if easy { 0.6 } else { rng.gen_range(0.0..0.3) },
            contrast: 0.3,
            secondary: 0.25,
        };
        // The next shot starts about 45 degrees away from where this one ends.
        angle = params.angle_at(len.saturating_sub(1)) + 45.0 + rng.gen_range(-5.0..5.0);
        plan.push((params, len));
    }
    plan
}

/// Renders one full video and its ground-truth shots without touching disk.
pub fn render_video(spec: &SyntheticCorpusSpec, index: usize) -> (Vec<Frame>, Vec<GroundTruthShot>) {
    let video_id = spec.video_id(index);
    let mut frames = Vec::new();
    let mut shots = Vec::new();
    for (params, len) in plan_video(spec, index) {
        let begin = frames.len();
        frames.extend(params.render_all(len, spec.height, spec.width));
        shots.push(GroundTruthShot {
            video_id: video_id.clone(),
            begin_frame: begin,
            end_frame: frames.len(),
        });
    }
    (frames, shots)
}

/// Generated corpus: archives on disk plus the ground-truth table.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub root: PathBuf,
    pub videos: Vec<RawVideo>,
    pub shots: Vec<GroundTruthShot>,
}

/// Writes every video of `spec` as a frame archive under `out_dir` and the
/// ground truth to `out_dir/shots.jsonl`.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec, out_dir: impl AsRef<Path>) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let root = out_dir.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let rendered = (0..spec.num_videos)
        .into_par_iter()
        .map(|i| {
            let (frames, shots) = render_video(spec, i);
            let id = spec.video_id(i);
            let video = write_archive(root.join(&id), &id, spec.fps, &frames)?;
            Ok((video, shots))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut videos = Vec::with_capacity(rendered.len());
    let mut shots = Vec::new();
    for (v, s) in rendered {
        videos.push(v);
        shots.extend(s);
    }
    write_ground_truth(root.join(GROUND_TRUTH_FILE), &shots)?;
    Ok(SyntheticCorpus {
        root: root.to_path_buf(),
        videos,
        shots,
    })
}

pub fn write_ground_truth(path: impl AsRef<Path>, shots: &[GroundTruthShot]) -> Result<()> {
    let path = path.as_ref();
    let mut text = Vec::new();
    for s in shots {
        serde_json::to_writer(&mut text, s).expect("serializable shot");
        text.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&text).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthShot>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
        .collect()
}
