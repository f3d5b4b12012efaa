use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledVideoDataset;
use crate::backbone::{Backbone, BackboneConfig, CLIP_LEN, CROP_SIZE};
use crate::error::{input_err, Error, Result};
use crate::nn::{Linear, Matrix, NormMode, ParamStore, Sgd, Tensor5};
use crate::relations::{center_crop, crop_frame, draw_crop, frames_to_tensor};
use crate::seed;
use crate::train::{argmax, batch_softmax_cross_entropy, softmax, TensorArchive};
use crate::video::{Frame, RawVideo};

/// Clips sampled per video at test time.
pub const TEST_CLIPS: usize = 10;

/// `start_i = floor(i * (T - 16) / 9)` for `i` in `0..10`.
pub fn clip_starts(frame_count: usize) -> Result<[usize; TEST_CLIPS]> {
    if frame_count < CLIP_LEN {
        return Err(input_err!("video has {frame_count} frames, clips need {CLIP_LEN}"));
    }
    let span = frame_count - CLIP_LEN;
    Ok(std::array::from_fn(|i| i * span / (TEST_CLIPS - 1)))
}

/// Center-cropped clips at the uniform test offsets.
pub fn test_clips(frames: &[Frame]) -> Result<Vec<Vec<Frame>>> {
    clip_starts(frames.len())?
        .iter()
        .map(|&s| {
            frames[s..s + CLIP_LEN]
                .iter()
                .map(|f| crop_frame(f, center_crop(), CROP_SIZE))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Every frame of `video` at canonical size.
pub fn decode_video(video: &RawVideo) -> Result<Vec<Frame>> {
    Ok(video.decode_frames(0..video.frame_count)?.into_frames())
}

fn clip_tensor(clips: &[Vec<Frame>]) -> Result<Tensor5> {
    let refs: Vec<&[Frame]> = clips.iter().map(Vec::as_slice).collect();
    frames_to_tensor(&refs)
}

/// Backbone plus a `feature_dim -> classes` head.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub backbone: Backbone,
    pub head_params: ParamStore,
    head: Linear,
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierMeta {
    backbone: BackboneConfig,
    class_names: Vec<String>,
    source_fingerprint: String,
}

const CLASSIFIER_KIND: &str = "classifier";

/// Averaged class probabilities over the test clips of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

impl Classifier {
    pub fn new<R: Rng>(backbone: Backbone, class_names: Vec<String>, rng: &mut R) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(input_err!(
                "classification needs at least 2 classes, got {}",
                class_names.len()
            ));
        }
        let mut head_params = ParamStore::new();
        let head = Linear::new(
            &mut head_params,
            "classifier",
            backbone.feature_dim(),
            class_names.len(),
            rng,
        );
        Ok(Self {
            backbone,
            head_params,
            head,
            class_names,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// Inference logits, `B x classes`.
    pub fn logits(&self, x: &Tensor5) -> Result<Matrix> {
        Ok(self.head.forward(&self.head_params, &self.backbone.features(x)?))
    }

    /// Mean of the per-clip softmax over the uniformly spaced center crops.
    pub fn predict_frames(&self, frames: &[Frame]) -> Result<Prediction> {
        let logits = self.logits(&clip_tensor(&test_clips(frames)?)?)?;
        average_prediction(&logits)
    }

    pub fn to_archive(&self, source_fingerprint: &str) -> TensorArchive {
        let meta = ClassifierMeta {
            backbone: self.backbone.config().clone(),
            class_names: self.class_names.clone(),
            source_fingerprint: source_fingerprint.to_string(),
        };
        TensorArchive::new(CLASSIFIER_KIND, serde_json::to_value(meta).expect("serializable meta"))
            .with_store("backbone", self.backbone.params.clone())
            .with_store("head", self.head_params.clone())
    }

    pub fn write(&self, path: impl AsRef<Path>, source_fingerprint: &str) -> Result<()> {
        self.to_archive(source_fingerprint).write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut archive = TensorArchive::read(path)?.expect_kind(CLASSIFIER_KIND)?;
        let meta: ClassifierMeta = archive.meta_as()?;
        let ck = |e: Error| Error::Checkpoint(e.to_string());
        let mut backbone = Backbone::new(meta.backbone, &mut seed::rng(0)).map_err(ck)?;
        backbone.load_params(archive.take_store("backbone")?).map_err(ck)?;
        let mut model = Self::new(backbone, meta.class_names, &mut seed::rng(0)).map_err(ck)?;
        let head = archive.take_store("head")?;
        if !model.head_params.same_layout(&head) {
            return Err(Error::Checkpoint(
                "classifier head does not match its class list".into(),
            ));
        }
        model.head_params = head;
        Ok(model)
    }
}

/// Averages row-wise softmax probabilities and takes the argmax.
pub fn average_prediction(logits: &Matrix) -> Result<Prediction> {
    if logits.rows() == 0 {
        return Err(input_err!("no clips to average"));
    }
    let mut mean = vec![0.0; logits.cols()];
    for r in 0..logits.rows() {
        for (m, p) in mean.iter_mut().zip(softmax(logits.row(r))?) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= logits.rows() as f64);
    Ok(Prediction {
        label: argmax(&mean),
        probabilities: mean,
    })
}

pub fn predict_video(classifier: &Classifier, video: &RawVideo) -> Result<Prediction> {
    classifier.predict_frames(&decode_video(video)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop at the end of the first epoch whose test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 150,
            batch_size: 8,
            seed: 0,
            target_accuracy: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub classifier: Classifier,
    pub history: Vec<FinetuneRecord>,
    /// First epoch whose test accuracy reached the target, if any.
    pub crossed_at: Option<usize>,
}

/// Fraction of videos whose averaged prediction equals the label.
pub fn accuracy_on(classifier: &Classifier, videos: &[(Vec<Frame>, usize)]) -> Result<f64> {
    let hits = videos
        .iter()
        .map(|(frames, label)| Ok(usize::from(classifier.predict_frames(frames)?.label == *label)))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / videos.len().max(1) as f64)
}

fn decode_split(ds: &LabeledVideoDataset) -> Result<Vec<(Vec<Frame>, usize)>> {
    ds.videos
        .par_iter()
        .map(|v| Ok((decode_video(&v.video)?, v.label)))
        .collect()
}

/// Trains a fresh classification head jointly with `backbone`.
///
/// Each epoch visits every training video once with a random 16-frame window
/// and random crop; test accuracy uses [`Classifier::predict_frames`].
pub fn finetune(
    backbone: Backbone,
    train: &LabeledVideoDataset,
    test: Option<&LabeledVideoDataset>,
    config: &FinetuneConfig,
    mut on_record: impl FnMut(&FinetuneRecord),
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(input_err!("fine-tuning needs at least one training video"));
    }
    if let Some(t) = test {
        train.check_disjoint(t)?;
    }
    let mut rng = seed::rng(seed::mix_str(config.seed, "finetune_head"));
    let mut model = Classifier::new(backbone, train.class_names.clone(), &mut rng)?;
    let train_frames = decode_split(train)?;
    if let Some((f, _)) = train_frames.iter().find(|(f, _)| f.len() < CLIP_LEN) {
        return Err(input_err!(
            "training video with {} frames is shorter than a clip",
            f.len()
        ));
    }
    let test_frames = test.map(decode_split).transpose()?;
    let mut opt_backbone = Sgd::new(config.learning_rate, config.momentum, config.weight_decay);
    let mut opt_head = opt_backbone.clone();
    let mut history = Vec::new();
    let mut crossed_at = None;

    for epoch in 1..=config.epochs {
        let mut rng = seed::rng(seed::mix(config.seed, epoch as u64));
        let mut order: Vec<usize> = (0..train_frames.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut clips = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (frames, label) = &train_frames[i];
                let start = rng.gen_range(0..=frames.len() - CLIP_LEN);
                let crop = draw_crop(&mut rng);
                clips.push(
                    frames[start..start + CLIP_LEN]
                        .iter()
                        .map(|f| crop_frame(f, crop, CROP_SIZE))
                        .collect::<Result<Vec<_>>>()?,
                );
                labels.push(*label);
            }
            let x = clip_tensor(&clips)?;
            let fwd = model.backbone.forward(&x, NormMode::Train)?;
            let logits = model.head.forward(&model.head_params, &fwd.features);
            let loss = batch_softmax_cross_entropy(&logits, &labels).map_err(|e| Error::Diverged {
                epoch,
                batch: bi,
                learning_rate: config.learning_rate,
                detail: e.to_string(),
            })?;
            let mut g_head = model.head_params.zero_grads();
            let dfeat = model
                .head
                .backward(&model.head_params, &fwd.features, &loss.dlogits, &mut g_head);
            let mut g_backbone = model.backbone.params.zero_grads();
            model.backbone.backward(&fwd.tape, &dfeat, &mut g_backbone);
            if !loss.loss.is_finite() || !g_backbone.is_finite() || !g_head.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    learning_rate: config.learning_rate,
                    detail: "non-finite loss or gradient".into(),
                });
            }
            opt_backbone.step(&mut model.backbone.params, &g_backbone);
            opt_head.step(&mut model.head_params, &g_head);
            model.backbone.apply_stat_updates(&fwd.stat_updates);
            loss_sum += loss.loss * labels.len() as f64;
            hits += loss.correct;
        }
        let test_acc = test_frames.as_ref().map(|t| accuracy_on(&model, t)).transpose()?;
        let record = FinetuneRecord {
            epoch,
            loss: loss_sum / train_frames.len() as f64,
            train_acc: hits as f64 / train_frames.len() as f64,
            test_acc,
        };
        on_record(&record);
        history.push(record);
        if let (Some(target), Some(acc)) = (config.target_accuracy, test_acc) {
            if acc >= target {
                crossed_at = Some(epoch);
                break;
            }
        }
    }
    Ok(FinetuneOutcome {
        classifier: model,
        history,
        crossed_at,
    })
}
