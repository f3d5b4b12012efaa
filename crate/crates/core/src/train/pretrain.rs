use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, SiameseOptimizer};
use super::config::TrainConfig;
use super::model::SiameseModel;
use crate::error::{input_err, Error, Result};
use crate::nn::NormMode;
use crate::relations::{
    check_satisfiable, clips_to_tensor, materialize, plan_stream, FrameLoader, RelationSample, RelationSet,
    SampleIndex, SamplePlan, SamplerConfig,
};
use crate::seed;
use crate::shots::Manifest;

/// Where a batch step sits in the run, for divergence diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepContext {
    pub epoch: usize,
    pub batch: usize,
}

/// Per-class tallies of one pass over some samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTally {
    relations: RelationSet,
    loss_sum: f64,
    correct: Vec<usize>,
    total: Vec<usize>,
}

impl RelationTally {
    pub fn new(relations: &RelationSet) -> Self {
        Self {
            relations: relations.clone(),
            loss_sum: 0.0,
            correct: vec![0; relations.len()],
            total: vec![0; relations.len()],
        }
    }

    /// `loss` is the mean over `labels`.
    pub fn add(&mut self, loss: f64, labels: &[usize], predictions: &[usize]) {
        self.loss_sum += loss * labels.len() as f64;
        for (&y, &p) in labels.iter().zip(predictions) {
            self.total[y] += 1;
            self.correct[y] += usize::from(y == p);
        }
    }

    pub fn count(&self) -> usize {
        self.total.iter().sum()
    }

    pub fn loss(&self) -> f64 {
        self.loss_sum / self.count().max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct.iter().sum::<usize>() as f64 / self.count().max(1) as f64
    }

    /// Accuracy per relation code; relations absent from the pass are omitted.
    pub fn per_relation(&self) -> BTreeMap<String, f64> {
        self.relations
            .categories()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.total[*i] > 0)
            .map(|(i, c)| (c.code().to_string(), self.correct[i] as f64 / self.total[i] as f64))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub overall_acc: f64,
    pub per_relation_acc: BTreeMap<String, f64>,
}

impl EpochRecord {
    fn from_tally(epoch: usize, split: Split, t: &RelationTally) -> Self {
        Self {
            epoch,
            split,
            loss: t.loss(),
            overall_acc: t.accuracy(),
            per_relation_acc: t.per_relation(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
}

impl StepMetrics {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .labels
            .iter()
            .zip(&self.predictions)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / self.labels.len() as f64
    }
}

fn batch_tensors(
    model: &SiameseModel,
    batch: &[&RelationSample],
) -> Result<(crate::nn::Tensor5, crate::nn::Tensor5, Vec<usize>)> {
    let a: Vec<_> = batch.iter().map(|s| &s.clip_a).collect();
    let b: Vec<_> = batch.iter().map(|s| &s.clip_b).collect();
    let labels = batch
        .iter()
        .map(|s| model.class_index(s.label))
        .collect::<Result<Vec<_>>>()?;
    Ok((clips_to_tensor(&a)?, clips_to_tensor(&b)?, labels))
}

/// One momentum-SGD update on a batch of pairs.
pub fn train_step(
    model: &mut SiameseModel,
    batch: &[&RelationSample],
    optimizer: &mut SiameseOptimizer,
    ctx: StepContext,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(input_err!("empty training batch"));
    }
    let diverged = |detail: String| Error::Diverged {
        epoch: ctx.epoch,
        batch: ctx.batch,
        learning_rate: optimizer.learning_rate(),
        detail,
    };
    let (a, b, labels) = batch_tensors(model, batch)?;
    let g = match model.gradients(&a, &b, &labels, NormMode::Train) {
        Ok(g) => g,
        Err(Error::Numeric(m)) => return Err(diverged(m)),
        Err(e) => return Err(e),
    };
    if !g.loss.loss.is_finite() {
        return Err(diverged(format!("loss {}", g.loss.loss)));
    }
    if !g.backbone.is_finite() || !g.head.is_finite() {
        return Err(diverged("non-finite gradient".into()));
    }
    optimizer.backbone.step(&mut model.backbone.params, &g.backbone);
    optimizer.head.step(&mut model.head_params, &g.head);
    model.backbone.apply_stat_updates(&g.stat_updates);
    Ok(StepMetrics {
        loss: g.loss.loss,
        labels,
        predictions: g.loss.predictions,
    })
}

/// Inference-mode metrics over `samples`.
pub fn evaluate(model: &SiameseModel, samples: &[&RelationSample], batch_size: usize) -> Result<RelationTally> {
    let mut tally = RelationTally::new(model.relations());
    for chunk in samples.chunks(batch_size.max(1)) {
        let (a, b, labels) = batch_tensors(model, chunk)?;
        let g = model.forward_pair(&a, &b)?;
        let loss = super::loss::batch_softmax_cross_entropy(&g, &labels)?;
        tally.add(loss.loss, &labels, &loss.predictions);
    }
    Ok(tally)
}

/// Training plans plus the held-out validation stream.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainData {
    pub train: Vec<SamplePlan>,
    pub validation: Vec<SamplePlan>,
}

/// Seed of the validation stream belonging to a training stream.
pub fn validation_seed(stream_seed: u64) -> u64 {
    seed::mix_str(stream_seed, "validation")
}

impl PretrainData {
    pub fn from_manifest(
        manifest: &Manifest,
        sampler: &SamplerConfig,
        train_count: usize,
        validation_count: usize,
        stream_seed: u64,
    ) -> Result<Self> {
        check_satisfiable(manifest, sampler)?;
        Ok(Self {
            train: plan_stream(manifest, sampler, stream_seed, 0..train_count as u64)?,
            validation: plan_stream(
                manifest,
                sampler,
                validation_seed(stream_seed),
                0..validation_count as u64,
            )?,
        })
    }

    /// Training plans from a stored index; validation drawn from the same manifest.
    pub fn from_index(index: &SampleIndex, manifest: &Manifest, validation_count: usize) -> Result<Self> {
        crate::fingerprint::check(
            "sample index manifest",
            manifest.fingerprint(),
            &index.header.manifest_fingerprint,
            false,
        )?;
        let sampler = &index.header.sampler;
        check_satisfiable(manifest, sampler)?;
        Ok(Self {
            train: index.plans.clone(),
            validation: plan_stream(
                manifest,
                sampler,
                validation_seed(index.header.seed),
                0..validation_count as u64,
            )?,
        })
    }
}

/// Serves materialized samples either from memory or by decoding on demand.
enum SampleSource<'a> {
    Cached(Vec<RelationSample>),
    Lazy(&'a FrameLoader, &'a [SamplePlan]),
}

impl<'a> SampleSource<'a> {
    fn new(plans: &'a [SamplePlan], loader: &'a FrameLoader, cache: bool) -> Result<Self> {
        if cache {
            let samples = plans
                .par_iter()
                .map(|p| materialize(p, loader))
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleSource::Cached(samples))
        } else {
            Ok(SampleSource::Lazy(loader, plans))
        }
    }

    fn len(&self) -> usize {
        match self {
            SampleSource::Cached(s) => s.len(),
            SampleSource::Lazy(_, p) => p.len(),
        }
    }

    fn with_batch<T>(&self, indices: &[usize], f: impl FnOnce(&[&RelationSample]) -> Result<T>) -> Result<T> {
        match self {
            SampleSource::Cached(s) => {
                let refs: Vec<_> = indices.iter().map(|&i| &s[i]).collect();
                f(&refs)
            }
            SampleSource::Lazy(loader, plans) => {
                let owned = indices
                    .par_iter()
                    .map(|&i| materialize(&plans[i], loader))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<_> = owned.iter().collect();
                f(&refs)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Highest validation accuracy seen; earliest epoch wins ties.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
}

impl PretrainOutcome {
    pub fn train_records(&self) -> impl Iterator<Item = &EpochRecord> {
        self.history.iter().filter(|r| r.split == Split::Train)
    }

    pub fn validation_records(&self) -> impl Iterator<Item = &EpochRecord> {
        self.history.iter().filter(|r| r.split == Split::Val)
    }
}

/// Trains `model` on `data.train`, validating on `data.validation`.
///
/// `on_record` sees every log record as soon as it exists. Training order per
/// epoch is a permutation drawn from `(config.seed, epoch)`, so a run is a
/// pure function of its inputs.
pub fn pretrain(
    mut model: SiameseModel,
    data: &PretrainData,
    loader: &FrameLoader,
    config: &TrainConfig,
    config_fingerprint: &str,
    mut on_record: impl FnMut(&EpochRecord),
) -> Result<PretrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::Config(
            "pretraining needs training and validation samples".into(),
        ));
    }
    for plan in data.train.iter().chain(&data.validation) {
        model
            .class_index(plan.label)
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let train = SampleSource::new(&data.train, loader, config.cache_clips)?;
    let val = SampleSource::new(&data.validation, loader, config.cache_clips)?;
    let val_indices: Vec<usize> = (0..val.len()).collect();

    let mut optimizer = SiameseOptimizer::new(config);
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut last_val = 0.0;
    let snapshot = |model: &SiameseModel, opt: &SiameseOptimizer, epoch: usize, acc: f64| Checkpoint {
        model: model.clone(),
        optimizer: opt.clone(),
        epoch,
        validation_accuracy: acc,
        config_fingerprint: config_fingerprint.to_string(),
        train_config: config.clone(),
    };

    for epoch in 1..=config.epochs {
        optimizer.set_learning_rate(config.learning_rate_at(epoch));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(seed::mix(config.seed, epoch as u64)));
        let mut tally = RelationTally::new(model.relations());
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let m = train.with_batch(chunk, |batch| {
                train_step(&mut model, batch, &mut optimizer, StepContext { epoch, batch: bi })
            })?;
            tally.add(m.loss, &m.labels, &m.predictions);
        }
        let train_record = EpochRecord::from_tally(epoch, Split::Train, &tally);
        on_record(&train_record);
        let train_acc = train_record.overall_acc;
        history.push(train_record);

        if epoch % config.validate_every != 0 && epoch != config.epochs {
            continue;
        }
        let vt = val.with_batch(&val_indices, |samples| evaluate(&model, samples, config.batch_size))?;
        let record = EpochRecord::from_tally(epoch, Split::Val, &vt);
        on_record(&record);
        last_val = record.overall_acc;
        history.push(record);
        if best.as_ref().map_or(true, |b| last_val > b.validation_accuracy) {
            best = Some(snapshot(&model, &optimizer, epoch, last_val));
        }
        if let Some(t) = config.target {
            if train_acc >= t.train_accuracy && last_val >= t.validation_accuracy {
                let last = snapshot(&model, &optimizer, epoch, last_val);
                return Ok(PretrainOutcome {
                    best: best.expect("validated this epoch"),
                    last,
                    history,
                });
            }
        }
    }
    let epochs_run = history.last().map_or(0, |r| r.epoch);
    Ok(PretrainOutcome {
        best: best.expect("the final epoch always validates"),
        last: snapshot(&model, &optimizer, epochs_run, last_val),
        history,
    })
}
