use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::seed;
use crate::video::{palette, write_archive, DecodeConfig, MotionKind, RawVideo, ShotParams};

/// A video with its class index.
#[derive(Clone, Debug)]
pub struct LabeledVideo {
    pub video: RawVideo,
    pub label: usize,
}

/// Labeled videos of one split.
#[derive(Clone, Debug)]
pub struct LabeledVideoDataset {
    pub split: String,
    pub class_names: Vec<String>,
    pub videos: Vec<LabeledVideo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitEntry {
    path: PathBuf,
    label: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    split: String,
    classes: Vec<String>,
    videos: Vec<SplitEntry>,
}

impl LabeledVideoDataset {
    pub fn new(split: impl Into<String>, class_names: Vec<String>, videos: Vec<LabeledVideo>) -> Result<Self> {
        let ds = Self {
            split: split.into(),
            class_names,
            videos,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.videos.iter().find(|v| v.label >= self.class_count()) {
            return Err(input_err!(
                "video {} has label {} but the {} split declares {} classes",
                v.video.video_id,
                v.label,
                self.split,
                self.class_count()
            ));
        }
        let mut ids = BTreeSet::new();
        if let Some(v) = self.videos.iter().find(|v| !ids.insert(&v.video.video_id)) {
            return Err(input_err!(
                "video {} listed twice in the {} split",
                v.video.video_id,
                self.split
            ));
        }
        Ok(())
    }

    /// Splits must share the class list and no video.
    pub fn check_disjoint(&self, other: &LabeledVideoDataset) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(input_err!(
                "splits {} and {} declare different classes",
                self.split,
                other.split
            ));
        }
        let ours: BTreeSet<_> = self.videos.iter().map(|v| &v.video.source_path).collect();
        if let Some(v) = other.videos.iter().find(|v| ours.contains(&v.video.source_path)) {
            return Err(input_err!(
                "video {} appears in both {} and {}",
                v.video.source_path.display(),
                self.split,
                other.split
            ));
        }
        Ok(())
    }

    /// Reads a split file; video paths are relative to the file's directory.
    pub fn read(path: impl AsRef<Path>, decode: &DecodeConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SplitFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let videos = file
            .videos
            .par_iter()
            .map(|e| {
                Ok(LabeledVideo {
                    video: RawVideo::open(base.join(&e.path), decode)?,
                    label: e.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.split, file.classes, videos)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let file = SplitFile {
            split: self.split.clone(),
            classes: self.class_names.clone(),
            videos: self
                .videos
                .iter()
                .map(|v| SplitEntry {
                    path: v
                        .video
                        .source_path
                        .strip_prefix(base)
                        .unwrap_or(&v.video.source_path)
                        .to_path_buf(),
                    label: v.label,
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("serializable split");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Motion classes of the synthetic action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionClass {
    Static,
    TranslateHorizontal,
    TranslateVertical,
    Rotating,
}

impl ActionClass {
    pub const ALL: [ActionClass; 4] = [
        ActionClass::Static,
        ActionClass::TranslateHorizontal,
        ActionClass::TranslateVertical,
        ActionClass::Rotating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::Static => "static",
            ActionClass::TranslateHorizontal => "translate_horizontal",
            ActionClass::TranslateVertical => "translate_vertical",
            ActionClass::Rotating => "rotating",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionSetSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub frames: usize,
    /// Translation speed range, pixels per frame.
    pub speed: [f64; 2],
    /// Rotation speed range, degrees per frame.
    pub angular_speed: [f64; 2],
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for ActionSetSpec {
    fn default() -> Self {
        Self {
            train_per_class: 10,
            test_per_class: 5,
            frames: 40,
            speed: [1.5, 2.5],
            angular_speed: [2.0, 4.0],
            height: 128,
            width: 171,
            fps: 25.0,
            seed: 0,
        }
    }
}

impl ActionSetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(input_err!("every class needs training and test videos"));
        }
        if self.frames < crate::backbone::CLIP_LEN {
            return Err(input_err!("videos need at least {} frames", crate::backbone::CLIP_LEN));
        }
        for [lo, hi] in [self.speed, self.angular_speed] {
            if !(lo > 0.0 && lo <= hi) {
                return Err(input_err!("empty speed range [{lo}, {hi}]"));
            }
        }
        if self.height == 0 || self.width == 0 || !(self.fps > 0.0) {
            return Err(input_err!("frame size and fps must be positive"));
        }
        Ok(())
    }

    /// Appearance and motion of one video; `salt` distinguishes videos.
    pub fn video_params(&self, class: ActionClass, salt: u64) -> ShotParams {
        let mut rng = seed::rng(seed::mix(self.seed, salt));
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let speed = sign * rng.gen_range(self.speed[0]..=self.speed[1]);
        let (motion, velocity, angular_velocity) = match class {
            ActionClass::Static => (MotionKind::Static, [0.0, 0.0], 0.0),
            ActionClass::TranslateHorizontal => (MotionKind::Translating, [speed, 0.0], 0.0),
            ActionClass::TranslateVertical => (MotionKind::Translating, [0.0, speed], 0.0),
            ActionClass::Rotating => (
                MotionKind::Rotating,
                [0.0, 0.0],
                sign * rng.gen_range(self.angular_speed[0]..=self.angular_speed[1]),
            ),
        };
        ShotParams {
            motion,
            angle: rng.gen_range(0.0..180.0),
            periods: [rng.gen_range(16.0..32.0), rng.gen_range(16.0..32.0)],
            phases: [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)],
            velocity,
            angular_velocity,
            color: palette(rng.gen_range(0.0..1.0)),
            ramp: 0.0,
            contrast: 0.3,
            // A strong second grating makes translation visible in every direction.
            secondary: 0.8,
        }
    }
}

/// Renders the action set under `out_dir` and writes `train.json` and `test.json`.
pub fn generate_action_dataset(
    spec: &ActionSetSpec,
    out_dir: impl AsRef<Path>,
) -> Result<(LabeledVideoDataset, LabeledVideoDataset)> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let classes: Vec<String> = ActionClass::ALL.iter().map(|c| c.name().to_string()).collect();
    let mut splits = Vec::new();
    for (split, per_class, salt_base) in [
        ("train", spec.train_per_class, 0u64),
        ("test", spec.test_per_class, 1 << 32),
    ] {
        let jobs: Vec<(usize, ActionClass)> = (0..per_class)
            .flat_map(|i| ActionClass::ALL.into_iter().map(move |c| (i, c)))
            .collect();
        let videos = jobs
            .par_iter()
            .enumerate()
            .map(|(n, &(_, class))| {
                let params = spec.video_params(class, salt_base + n as u64);
                let frames = params.render_all(spec.frames, spec.height, spec.width);
                let id = format!("{split}{n:04}");
                let dir = out_dir.join("videos").join(&id);
                Ok(LabeledVideo {
                    video: write_archive(&dir, &id, spec.fps, &frames)?,
                    label: class as usize,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = LabeledVideoDataset::new(split, classes.clone(), videos)?;
        ds.write(out_dir.join(format!("{split}.json")))?;
        splits.push(ds);
    }
    let test = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    train.check_disjoint(&test)?;
    Ok((train, test))
}
