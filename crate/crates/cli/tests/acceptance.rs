//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any fails. Numeric arguments select a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::Rng;
use tempfile::TempDir;
use vidrel::backbone::{
    numeric_gradient_check, Backbone, BackboneConfig, BackboneKind, GradCheckOptions, LossHead, CLIP_LEN,
};
use vidrel::downstream::{
    extract_descriptors, finetune, generate_action_dataset, retrieve, ActionSetSpec, Distance, FinetuneConfig,
    LabeledVideoDataset, RetrievalMode, VideoDescriptor, DEFAULT_TOP_K,
};
use vidrel::nn::{NormMode, Tensor5};
use vidrel::relations::*;
use vidrel::seed;
use vidrel::shots::{build_manifest, detect_shot_changes, segment_shot, segment_shots, Shot, ShotEditParams};
use vidrel::train::*;
use vidrel::video::{generate_synthetic_corpus, DecodeConfig, PatternStyle, SyntheticCorpusSpec};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Pretrained {
    backbone: Backbone,
    epoch: usize,
    train_accuracy: f64,
    validation_accuracy: f64,
}

/// State shared between criteria that reuse one expensive artifact.
#[derive(Default)]
struct Shared {
    pretrained: Option<Pretrained>,
    actions: Option<(TempDir, LabeledVideoDataset, LabeledVideoDataset)>,
    /// Time spent building shared artifacts; not charged to a criterion's budget.
    setup: Duration,
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, u64, fn(&mut Shared) -> Check); 10] = [
        (1, "shot-detection exactness", 120, shot_detection),
        (2, "segmentation formula", 10, segmentation),
        (3, "sampler label soundness", 300, sampler_soundness),
        (4, "transform algebra", 10, transform_algebra),
        (5, "numeric correctness", 300, numeric_correctness),
        (6, "weight sharing and export", 120, weight_sharing),
        (7, "learnability", 1800, learnability),
        (8, "downstream transfer", 1800, transfer),
        (9, "retrieval metric", 60, retrieval_metric),
        (10, "end-to-end determinism", 900, determinism),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    let mut lines = Vec::new();
    for (id, name, budget, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let setup_before = shared.setup;
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut shared)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let setup = shared.setup - setup_before;
        let elapsed = start.elapsed().saturating_sub(setup);
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(budget) => {
                Err(format!("took {:.0}s, budget {budget}s", elapsed.as_secs_f64()))
            }
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => ("FAIL", e.clone()),
        };
        failed += usize::from(result.is_err());
        let setup_note = if setup.is_zero() {
            String::new()
        } else {
            format!(" + {:.1}s shared setup", setup.as_secs_f64())
        };
        let line = format!(
            "{tag} [{id:>2}] {name} ({:.1}s{setup_note}): {detail}",
            elapsed.as_secs_f64()
        );
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary");
    for l in &lines {
        println!("{l}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn shot_detection(_: &mut Shared) -> Check {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let spec = SyntheticCorpusSpec {
        num_videos: 20,
        seed: 2024,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path()).map_err(|e| e.to_string())?;
    let params = ShotEditParams::default();
    let (mut tp, mut detected, mut truth) = (0usize, 0usize, 0usize);
    for video in &corpus.videos {
        let shots = detect_shot_changes(video, &params.threshold, &params.hog).map_err(|e| e.to_string())?;
        let found: Vec<usize> = shots.iter().skip(1).map(|s| s.begin).collect();
        let expected: Vec<usize> = corpus
            .shots
            .iter()
            .filter(|s| s.video_id == video.video_id && s.begin_frame > 0)
            .map(|s| s.begin_frame)
            .collect();
        tp += found.iter().filter(|b| expected.contains(b)).count();
        detected += found.len();
        truth += expected.len();
    }
    let precision = tp as f64 / detected.max(1) as f64;
    let recall = tp as f64 / truth.max(1) as f64;
    ensure!(
        precision == 1.0 && recall == 1.0,
        "precision {precision:.4} recall {recall:.4}"
    );
    Ok(format!("{truth} cuts over 20 videos, precision 1.0, recall 1.0"))
}

fn segmentation(_: &mut Shared) -> Check {
    let min_len = 48;
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (0usize..10_000, 0usize..3_000, (min_len + 1)..900usize);
    runner
        .run(&strategy, |(b, len, k)| {
            let e = b + len;
            let shot = Shot {
                shot_id: "v/s000".into(),
                video_id: "v".into(),
                begin: b,
                end: e,
            };
            let segs = segment_shot(&shot, k, min_len);
            let mut expected = Vec::new();
            let mut i = 0;
            while b + (i + 1) * k <= e {
                expected.push((b + i * k, b + (i + 1) * k));
                i += 1;
            }
            let tail = b + i * k;
            if e - tail >= min_len && tail < e {
                expected.push((tail, e));
            }
            let got: Vec<(usize, usize)> = segs.iter().map(|s| (s.start, s.end)).collect();
            if got != expected {
                return Err(TestCaseError::fail(format!(
                    "b={b} e={e} K={k}: {got:?} != {expected:?}"
                )));
            }
            if segs.iter().any(|s| s.start < b || s.end > e) {
                return Err(TestCaseError::fail("segment outside its shot"));
            }
            // Two adjacent shots: every segment stays inside its own shot.
            let next = Shot {
                shot_id: "v/s001".into(),
                video_id: "v".into(),
                begin: e,
                end: e + len / 2 + 1,
            };
            let both = segment_shots(&[shot.clone(), next.clone()], k, min_len)
                .map_err(|err| TestCaseError::fail(err.to_string()))?;
            for s in &both {
                let owner = if s.shot_id == shot.shot_id { &shot } else { &next };
                if s.start < owner.begin || s.end > owner.end {
                    return Err(TestCaseError::fail(format!("{} crosses a shot boundary", s.segment_id)));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random (b, e, K) cases match the window enumeration".into())
}

fn sampler_soundness(_: &mut Shared) -> Check {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let spec = SyntheticCorpusSpec {
        num_videos: 8,
        seed: 31,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path()).map_err(|e| e.to_string())?;
    let manifest =
        build_manifest(&corpus.videos, &ShotEditParams::default(), "acceptance".into()).map_err(|e| e.to_string())?;
    let sampler = SamplerConfig::default();
    check_satisfiable(&manifest, &sampler).map_err(|e| e.to_string())?;
    let plans = plan_stream(&manifest, &sampler, 17, 0..10_000).map_err(|e| e.to_string())?;
    let mismatches = plans
        .iter()
        .filter(|p| verify_label(&p.clip_a, &p.clip_b) != p.label)
        .count();
    ensure!(mismatches == 0, "{mismatches} provenance mismatches");
    let stats = StreamStats::of(&plans);
    let clean: usize = stats.clean.values().sum();
    let mut worst = 0.0f64;
    for c in RelationCategory::ALL {
        let f = stats.clean.get(&c).copied().unwrap_or(0) as f64 / clean as f64;
        worst = worst.max((f - 1.0 / 7.0).abs());
    }
    ensure!(worst <= 0.02, "category frequency deviates by {worst:.4} from 1/7");
    Ok(format!(
        "0 mismatches in 10000; max frequency deviation {worst:.4} over {clean} clean samples ({} after fallback)",
        plans.len() - clean
    ))
}

fn transform_algebra(_: &mut Shared) -> Check {
    let k = CLIP_LEN;
    let list: Vec<usize> = (0..k).collect();
    ensure!(
        invert_segment_frames(&invert_segment_frames(&list)) == list,
        "double inversion is not the identity"
    );
    let mut rng = seed::rng(4);
    let clip = random_clip(&mut rng);
    let mut c = clip.clone();
    for _ in 0..4 {
        c = rotate_clip(&c, Some(90), &mut rng).map_err(|e| e.to_string())?;
    }
    ensure!(c == clip, "four quarter turns differ from the identity");
    for _ in 0..1000 {
        let s = shuffle_frames(&clip, &mut rng).map_err(|e| e.to_string())?;
        let TransformDescriptor::Shuffle { permutation } = &s.transform else {
            return Err("shuffle without a permutation".into());
        };
        ensure!(is_permutation(permutation), "not a bijection: {permutation:?}");
        ensure!(
            !is_identity(permutation) && !is_reversal(permutation),
            "identity or reversal: {permutation:?}"
        );
        ensure!(
            unshuffle(&s).map_err(|e| e.to_string())? == clip,
            "unshuffle does not restore the clip"
        );
    }
    for len in 0..=80 {
        for s in DILATION_INTERVALS {
            match dilate_segment(len, s, k) {
                Ok(idx) => {
                    ensure!(len >= s * k, "dilation accepted L={len} < {s}*{k}");
                    ensure!(idx.windows(2).all(|w| w[1] - w[0] == s), "unequal gaps at s={s}");
                }
                Err(_) => ensure!(len < s * k, "dilation rejected L={len} >= {s}*{k}"),
            }
        }
    }
    for _ in 0..1000 {
        let len = rng.gen_range(1..400);
        let s = DILATION_INTERVALS[rng.gen_range(0..2)];
        let list: Vec<usize> = (0..len).collect();
        ensure!(
            invert_segment_frames(&invert_segment_frames(&list)) == list,
            "inversion at len {len}"
        );
        if len >= 3 {
            let p = random_permutation(len, &mut rng).map_err(|e| e.to_string())?;
            ensure!(
                is_permutation(&p) && !is_identity(&p) && !is_reversal(&p),
                "bad permutation at len {len}"
            );
        }
        ensure!(
            dilate_segment(len, s, k).is_ok() == (len >= s * k),
            "eligibility at L={len} s={s}"
        );
        ensure!(
            eligible_intervals(len, k).iter().all(|&i| len >= i * k),
            "eligible interval too long"
        );
    }
    Ok("exhaustive k=16 checks plus 1000 randomized cases".into())
}

fn random_clip(rng: &mut impl Rng) -> Clip {
    let frames = (0..CLIP_LEN)
        .map(|_| vidrel::video::Frame::from_fn(112, 112, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()])))
        .collect();
    Clip {
        frames,
        provenance: ClipProvenance {
            segment_id: "v/s000/g000".into(),
            video_id: "v".into(),
            shot_id: "v/s000".into(),
            segment_start: 0,
            start_offset: 0,
            frame_indices: (0..CLIP_LEN).collect(),
            crop: [0, 0],
        },
        transform: TransformDescriptor::None,
    }
}

fn numeric_correctness(_: &mut Shared) -> Check {
    let mut rng = seed::rng(8);
    for _ in 0..200 {
        let logits: Vec<f64> = (0..7).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let p = softmax(&logits).map_err(|e| e.to_string())?;
        ensure!(
            (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
            "softmax sum {}",
            p.iter().sum::<f64>()
        );
        let shift = rng.gen_range(-500.0..500.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let q = softmax(&shifted).map_err(|e| e.to_string())?;
        ensure!(
            p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-12),
            "softmax not shift-invariant"
        );
        // Independent reference: p_i = 1 / sum_j exp(l_j - l_i).
        let label = rng.gen_range(0..7);
        let (_, grad) = softmax_cross_entropy(&logits, label).map_err(|e| e.to_string())?;
        for (i, g) in grad.iter().enumerate() {
            let pi = 1.0 / logits.iter().map(|l| (l - logits[i]).exp()).sum::<f64>();
            let expected = pi - if i == label { 1.0 } else { 0.0 };
            ensure!((g - expected).abs() <= 1e-10, "gradient {g} vs p - y {expected}");
        }
    }
    let (loss, _) = softmax_cross_entropy(&[0.25; 7], 3).map_err(|e| e.to_string())?;
    ensure!((loss - 7f64.ln()).abs() <= 1e-10, "uniform loss {loss} vs ln 7");
    let mut errors = Vec::new();
    for kind in [BackboneKind::C3d, BackboneKind::R3d, BackboneKind::R2plus1d] {
        let mut rng = seed::rng(42);
        let mut model = Backbone::new(BackboneConfig::tiny(kind), &mut rng).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let fwd = model
                .forward(&random_tensor(2, &mut rng), NormMode::Train)
                .map_err(|e| e.to_string())?;
            model.apply_stat_updates(&fwd.stat_updates);
        }
        let head = LossHead::new(model.feature_dim(), 7, &mut rng);
        let probe = random_tensor(2, &mut rng);
        let report = numeric_gradient_check(&model, &head, &probe, &[1, 5], &GradCheckOptions::default())
            .map_err(|e| e.to_string())?;
        ensure!(
            report.max_relative_error < 1e-4,
            "{kind:?} gradient check max relative error {:.3e}",
            report.max_relative_error
        );
        errors.push(format!("{} {:.1e}", kind.name(), report.max_relative_error));
    }
    Ok(format!(
        "softmax, loss and p - y exact; gradient check {}",
        errors.join(", ")
    ))
}

fn random_tensor(n: usize, rng: &mut impl Rng) -> Tensor5 {
    let dims = [n, 3, CLIP_LEN, 112, 112];
    Tensor5::from_vec(
        dims,
        (0..dims.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn weight_sharing(_: &mut Shared) -> Check {
    let mut rng = seed::rng(6);
    let mut model = SiameseModel::new(BackboneConfig::tiny(BackboneKind::C3d), RelationSet::all(), &mut rng)
        .map_err(|e| e.to_string())?;
    let probes: Vec<Tensor5> = (0..10).map(|_| random_tensor(10, &mut rng)).collect();
    let stacks_agree = |model: &SiameseModel| -> Result<(), String> {
        for x in &probes {
            for mode in [NormMode::Frozen, NormMode::Train] {
                let f = model.forward_pair_mode(x, x, mode).map_err(|e| e.to_string())?;
                ensure!(
                    f.features_a.data() == f.features_b.data(),
                    "stacks differ in {mode:?} mode"
                );
            }
        }
        Ok(())
    };
    stacks_agree(&model)?;
    let config = TrainConfig::tiny();
    let mut opt = SiameseOptimizer::new(&config);
    for _ in 0..50 {
        let (a, b) = (random_tensor(2, &mut rng), random_tensor(2, &mut rng));
        let labels = [rng.gen_range(0..7), rng.gen_range(0..7)];
        let g = model
            .gradients(&a, &b, &labels, NormMode::Train)
            .map_err(|e| e.to_string())?;
        opt.backbone.step(&mut model.backbone.params, &g.backbone);
        opt.head.step(&mut model.head_params, &g.head);
        model.backbone.apply_stat_updates(&g.stat_updates);
    }
    stacks_agree(&model)?;
    let checkpoint = Checkpoint {
        model: model.clone(),
        optimizer: opt,
        epoch: 1,
        validation_accuracy: 0.0,
        config_fingerprint: "acceptance".into(),
        train_config: config,
    };
    let bytes = export_single_stack(&checkpoint).to_archive().to_bytes();
    let export = BackboneExport::from_archive(TensorArchive::from_bytes(&bytes).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for x in &probes {
        let pair = model
            .forward_pair_mode(x, x, NormMode::Frozen)
            .map_err(|e| e.to_string())?;
        let single = export.backbone.features(x).map_err(|e| e.to_string())?;
        ensure!(
            single.data() == pair.features_a.data(),
            "exported stack differs from the trained stack"
        );
    }
    Ok("100 clips identical before and after 50 steps; export bit-exact".into())
}

const LEARN_EPOCHS: usize = 200;

/// Pretrains the tiny backbone on the easy corpus once; later criteria reuse it.
fn pretrained(shared: &mut Shared) -> Result<&Pretrained, String> {
    if shared.pretrained.is_none() {
        let start = Instant::now();
        let dir = TempDir::new().map_err(|e| e.to_string())?;
        let spec = SyntheticCorpusSpec {
            num_videos: 6,
            shots_per_video: [2, 3],
            shot_length_range: [60, 120],
            style: PatternStyle::Easy,
            seed: 7,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec, dir.path()).map_err(|e| e.to_string())?;
        let manifest = build_manifest(&corpus.videos, &ShotEditParams::default(), "acceptance".into())
            .map_err(|e| e.to_string())?;
        let loader = FrameLoader::for_manifest(&manifest, &DecodeConfig::default()).map_err(|e| e.to_string())?;
        let data = PretrainData::from_manifest(&manifest, &SamplerConfig::default(), 105, 70, 11)
            .map_err(|e| e.to_string())?;
        let model = SiameseModel::new(
            BackboneConfig::tiny(BackboneKind::C3d),
            RelationSet::all(),
            &mut seed::rng(3),
        )
        .map_err(|e| e.to_string())?;
        let config = TrainConfig {
            epochs: LEARN_EPOCHS,
            target: Some(StopTarget {
                train_accuracy: 0.95,
                validation_accuracy: 0.6,
            }),
            ..TrainConfig::tiny()
        };
        let outcome = pretrain(model, &data, &loader, &config, "acceptance", |r| {
            if r.split == Split::Val {
                eprintln!("  pretrain epoch {:>3} val {:.3}", r.epoch, r.overall_acc);
            }
        })
        .map_err(|e| e.to_string())?;
        let best = &outcome.best;
        let train_accuracy = outcome
            .train_records()
            .find(|r| r.epoch == best.epoch)
            .map_or(0.0, |r| r.overall_acc);
        shared.pretrained = Some(Pretrained {
            backbone: export_single_stack(best).backbone,
            epoch: best.epoch,
            train_accuracy,
            validation_accuracy: best.validation_accuracy,
        });
        shared.setup += start.elapsed();
    }
    Ok(shared.pretrained.as_ref().expect("just set"))
}

fn learnability(shared: &mut Shared) -> Check {
    // Pretraining is this criterion's own work, so it counts against the budget.
    let before = shared.setup;
    pretrained(shared)?;
    shared.setup = before;
    let p = shared.pretrained.as_ref().expect("pretrained");
    ensure!(
        p.train_accuracy >= 0.95 && p.validation_accuracy >= 0.6,
        "best epoch {}: train {:.3}, held-out {:.3} after at most {LEARN_EPOCHS} epochs",
        p.epoch,
        p.train_accuracy,
        p.validation_accuracy
    );
    Ok(format!(
        "epoch {}: train {:.3}, held-out {:.3} (floor 0.143)",
        p.epoch, p.train_accuracy, p.validation_accuracy
    ))
}

fn action_set(shared: &mut Shared) -> Result<&(TempDir, LabeledVideoDataset, LabeledVideoDataset), String> {
    if shared.actions.is_none() {
        let start = Instant::now();
        let dir = TempDir::new().map_err(|e| e.to_string())?;
        let spec = ActionSetSpec {
            seed: 21,
            ..Default::default()
        };
        let (train, test) = generate_action_dataset(&spec, dir.path()).map_err(|e| e.to_string())?;
        shared.actions = Some((dir, train, test));
        shared.setup += start.elapsed();
    }
    Ok(shared.actions.as_ref().expect("just set"))
}

const TRANSFER_TARGET: f64 = 0.9;
const TRANSFER_EPOCHS: usize = 60;

fn transfer(shared: &mut Shared) -> Check {
    let pretrained_backbone = pretrained(shared)?.backbone.clone();
    let (_, train, test) = action_set(shared)?;
    let config = FinetuneConfig {
        epochs: TRANSFER_EPOCHS,
        seed: 13,
        target_accuracy: Some(TRANSFER_TARGET),
        ..Default::default()
    };
    let random = Backbone::new(
        pretrained_backbone.config().clone(),
        &mut seed::rng(seed::mix_str(13, "init")),
    )
    .map_err(|e| e.to_string())?;
    let mut crossings = Vec::new();
    let mut finals = Vec::new();
    for (name, backbone) in [("pretrained", pretrained_backbone), ("random", random)] {
        let out = finetune(backbone, train, Some(test), &config, |r| {
            eprintln!(
                "  {name} epoch {:>3} test {:.3}",
                r.epoch,
                r.test_acc.unwrap_or(f64::NAN)
            );
        })
        .map_err(|e| e.to_string())?;
        let best = out.history.iter().filter_map(|r| r.test_acc).fold(0.0, f64::max);
        crossings.push(out.crossed_at);
        finals.push(best);
    }
    let show = |c: Option<usize>| c.map_or(format!("not within {TRANSFER_EPOCHS}"), |e| e.to_string());
    let summary = format!(
        "epochs to {TRANSFER_TARGET}: pretrained {}, random {}; best test accuracy {:.3} / {:.3}",
        show(crossings[0]),
        show(crossings[1]),
        finals[0],
        finals[1]
    );
    let Some(pre) = crossings[0] else {
        return Err(summary);
    };
    ensure!(crossings[1].map_or(true, |r| pre <= r), "{summary}");
    Ok(summary)
}

fn retrieval_metric(shared: &mut Shared) -> Check {
    let mut rng = seed::rng(12);
    let engineered = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<VideoDescriptor> {
        (0..n)
            .map(|i| {
                let label = i % 4;
                let v: Vec<f64> = (0..8)
                    .map(|j| if j == label { 10.0 } else { 0.0 } + rng.gen_range(-0.1..0.1))
                    .collect();
                VideoDescriptor::from_clips(format!("e{i}"), vec![v])
                    .expect("valid")
                    .with_label(label)
            })
            .collect()
    };
    let (gallery, queries) = (engineered(40, &mut rng), engineered(20, &mut rng));
    let oracle = retrieve(
        &queries,
        &gallery,
        &DEFAULT_TOP_K,
        Distance::Cosine,
        RetrievalMode::Video,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        oracle.accuracy(1) == Some(1.0),
        "engineered top-1 {:?}",
        oracle.accuracy(1)
    );
    let expected: Vec<String> = ["top1", "top5", "top10", "top20", "top50"].map(String::from).to_vec();
    ensure!(oracle.columns() == expected, "columns {:?}", oracle.columns());
    let backbone = pretrained(shared)?.backbone.clone();
    let (_, train, test) = action_set(shared)?;
    let g = extract_descriptors(&backbone, train).map_err(|e| e.to_string())?;
    let q = extract_descriptors(&backbone, test).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for distance in [Distance::Cosine, Distance::Euclidean] {
        for mode in [RetrievalMode::Video, RetrievalMode::Clip] {
            let t = retrieve(&q, &g, &DEFAULT_TOP_K, distance, mode).map_err(|e| e.to_string())?;
            ensure!(t.columns() == expected, "columns {:?}", t.columns());
            ensure!(
                t.top_k.windows(2).all(|w| w[0].1 <= w[1].1),
                "not monotone: {:?}",
                t.top_k
            );
            rows.push(format!("{:.2}", t.top_k[0].1));
        }
    }
    Ok(format!(
        "oracle top-1 1.0; pretrained top-1 {} (monotone in k)",
        rows.join("/")
    ))
}

fn vidrel(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vidrel"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "vidrel {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Runs the pipeline in `dir` and returns manifest, index and log bytes.
fn pipeline(dir: &Path) -> Result<[Vec<u8>; 3], String> {
    let seed = ["--seed", "5"];
    let run = |rest: &[&str]| vidrel(&[&seed[..], rest].concat(), dir);
    run(&["synth", "--out", "corpus"])?;
    run(&["edit-shots", "--videos", "corpus", "--out", "manifest.jsonl"])?;
    run(&[
        "build-samples",
        "--manifest",
        "manifest.jsonl",
        "--count",
        "60",
        "--out",
        "index.jsonl",
    ])?;
    run(&[
        "pretrain",
        "--manifest",
        "manifest.jsonl",
        "--samples",
        "index.jsonl",
        "--count",
        "60",
        "--preset",
        "tiny",
        "--epochs",
        "5",
        "--out",
        "model.ckpt",
        "--log",
        "log.jsonl",
    ])?;
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    Ok([read("manifest.jsonl")?, read("index.jsonl")?, read("log.jsonl")?])
}

fn determinism(_: &mut Shared) -> Check {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let work: PathBuf = dir.path().join("run");
    let mut runs = Vec::new();
    for _ in 0..2 {
        if work.exists() {
            std::fs::remove_dir_all(&work).map_err(|e| e.to_string())?;
        }
        std::fs::create_dir_all(&work).map_err(|e| e.to_string())?;
        runs.push(pipeline(&work)?);
    }
    let names = ["manifest", "sample index", "loss log"];
    for (i, name) in names.iter().enumerate() {
        ensure!(runs[0][i] == runs[1][i], "{name} bytes differ between runs");
    }
    let epochs = String::from_utf8_lossy(&runs[0][2]).lines().count();
    ensure!(epochs == 10, "expected 10 log records, found {epochs}");
    Ok(format!(
        "identical manifest ({} B), index ({} B) and 5-epoch loss log",
        runs[0][0].len(),
        runs[0][1].len()
    ))
}
