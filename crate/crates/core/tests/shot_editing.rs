use vidrel::shots::{
    build_manifest, detect_shot_changes, difference_series, frame_difference, hog_descriptor, HogParams, Manifest,
    ShotEditParams, Threshold,
};
use vidrel::video::{
    generate_synthetic_corpus, render_video, to_gray, GrayImage, MotionKind, PatternStyle, SyntheticCorpusSpec,
};

fn gray(f: impl Fn(usize, usize) -> f64) -> GrayImage {
    let data = (0..128 * 171).map(|i| f(i / 171, i % 171)).collect();
    GrayImage::new(128, 171, data)
}

#[test]
fn hog_matches_reference_implementation() {
    let img = gray(|y, x| ((x * x * 3 + y * 7 + x * y) % 97) as f64 / 97.0 * 0.5 + 0.5 * ((x / 9 + y / 5) % 2) as f64);
    let ours = hog_descriptor(&img, &HogParams::default()).unwrap();
    let reference: Vec<f64> = include_str!("fixtures/hog_reference.txt")
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(ours.len(), reference.len());
    let worst = ours
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "max deviation {worst}");
}

#[test]
fn vertical_edge_fills_horizontal_gradient_bin() {
    let img = gray(|_, x| if x >= 85 { 1.0 } else { 0.0 });
    let d = hog_descriptor(&img, &HogParams::default()).unwrap();
    let mut per_bin = [0.0; 9];
    for (i, v) in d.iter().enumerate() {
        per_bin[i % 9] += v;
    }
    // Reference value from the same image through scikit-image.
    assert!((per_bin[0] - 19.79898986).abs() < 1e-6, "{per_bin:?}");
    assert!(per_bin[1..].iter().all(|v| *v == 0.0));
}

#[test]
fn identical_frames_identical_descriptors() {
    let img = gray(|y, x| ((x * 31 + y * 17) % 23) as f64 / 23.0);
    let a = hog_descriptor(&img, &HogParams::default()).unwrap();
    let b = hog_descriptor(&img.clone(), &HogParams::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(frame_difference(&a, &b).unwrap(), 0.0);
}

fn margin_spec(seed: u64, style: PatternStyle) -> SyntheticCorpusSpec {
    SyntheticCorpusSpec {
        num_videos: 6,
        shots_per_video: [2, 4],
        shot_length_range: [40, 90],
        style,
        seed,
        ..Default::default()
    }
}

/// Smallest cut difference divided by the largest within-shot difference.
fn margin(spec: &SyntheticCorpusSpec) -> f64 {
    let params = HogParams::default();
    let mut worst = f64::INFINITY;
    for i in 0..spec.num_videos {
        let (frames, shots) = render_video(spec, i);
        let descriptors: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| hog_descriptor(&to_gray(f), &params).unwrap())
            .collect();
        let cuts: Vec<usize> = shots.iter().skip(1).map(|s| s.begin_frame).collect();
        let mut within: f64 = 0.0;
        let mut across = f64::INFINITY;
        for t in 1..frames.len() {
            let d = frame_difference(&descriptors[t - 1], &descriptors[t]).unwrap();
            if cuts.contains(&t) {
                across = across.min(d);
            } else {
                within = within.max(d);
            }
        }
        if !cuts.is_empty() {
            worst = worst.min(across / within);
        }
    }
    worst
}

#[test]
fn cut_margin_on_synthetic_corpus() {
    for seed in 0..3 {
        for style in [PatternStyle::Standard, PatternStyle::Easy] {
            let m = margin(&margin_spec(seed, style));
            assert!(m >= 5.0, "seed {seed} {style:?}: margin {m}");
        }
    }
}

#[test]
fn detects_exact_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticCorpusSpec {
        num_videos: 3,
        shots_per_video: [1, 3],
        shot_length_range: [50, 80],
        seed: 5,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path()).unwrap();
    for video in &corpus.videos {
        let shots = detect_shot_changes(video, &Threshold::default(), &HogParams::default()).unwrap();
        let found: Vec<(usize, usize)> = shots.iter().map(|s| (s.begin, s.end)).collect();
        let truth: Vec<(usize, usize)> = corpus
            .shots
            .iter()
            .filter(|s| s.video_id == video.video_id)
            .map(|s| (s.begin_frame, s.end_frame))
            .collect();
        assert_eq!(found, truth, "{}", video.video_id);
    }
}

#[test]
fn single_shot_and_infinite_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticCorpusSpec {
        num_videos: 2,
        shots_per_video: [1, 1],
        shot_length_range: [60, 60],
        motion_kinds: vec![MotionKind::Rotating],
        seed: 9,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path()).unwrap();
    for v in &corpus.videos {
        let shots = detect_shot_changes(v, &Threshold::default(), &HogParams::default()).unwrap();
        assert_eq!(shots.len(), 1);
        let shots = detect_shot_changes(v, &Threshold::Fixed(f64::INFINITY), &HogParams::default()).unwrap();
        assert_eq!((shots.len(), shots[0].begin, shots[0].end), (1, 0, 60));
    }
    assert_eq!(
        difference_series(&corpus.videos[0], &HogParams::default())
            .unwrap()
            .len(),
        59
    );
}

#[test]
fn manifest_from_synthetic_corpus_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticCorpusSpec {
        num_videos: 1,
        shots_per_video: [1, 1],
        shot_length_range: [650, 650],
        motion_kinds: vec![MotionKind::Static],
        height: 64,
        width: 80,
        seed: 2,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path()).unwrap();
    let params = ShotEditParams::default();
    let a = build_manifest(&corpus.videos, &params, "fp".into()).unwrap();
    let b = build_manifest(&corpus.videos, &params, "fp".into()).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let spans: Vec<(usize, usize)> = a.segments().iter().map(|s| (s.start, s.end)).collect();
    assert_eq!(spans, [(0, 300), (300, 600), (600, 650)]);
    let path = dir.path().join("manifest.jsonl");
    a.write(&path).unwrap();
    assert_eq!(Manifest::read(&path).unwrap(), a);
}
