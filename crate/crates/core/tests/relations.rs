use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use proptest::prelude::*;
use rand::Rng;
use vidrel::error::Error;
use vidrel::relations::*;
use vidrel::seed;
use vidrel::shots::{build_manifest, segment_id, shot_id, Manifest, Segment, ShotEditParams};
use vidrel::video::{generate_synthetic_corpus, Frame, SyntheticCorpusSpec};

use RelationCategory::*;

/// `(video, shot lengths per segment)` layout to a manifest with fake sources.
fn manifest(layout: &[(&str, &[&[usize]])]) -> Manifest {
    let mut segments = Vec::new();
    let mut sources = BTreeMap::new();
    let mut shots = 0;
    for (video, video_shots) in layout {
        sources.insert(video.to_string(), PathBuf::from(format!("/nowhere/{video}")));
        let mut frame = 0;
        for (si, segs) in video_shots.iter().enumerate() {
            shots += 1;
            let sid = shot_id(video, si);
            for (gi, len) in segs.iter().enumerate() {
                segments.push(Segment {
                    segment_id: segment_id(&sid, gi),
                    video_id: video.to_string(),
                    shot_id: sid.clone(),
                    start: frame,
                    end: frame + len,
                });
                frame += len;
            }
        }
    }
    Manifest::new(
        segments,
        sources,
        ShotEditParams::default(),
        layout.len(),
        shots,
        "test".into(),
    )
    .unwrap()
}

fn mixed() -> Manifest {
    manifest(&[
        ("v0", &[&[300, 300, 300], &[80]]),
        ("v1", &[&[50], &[120]]),
        ("v2", &[&[200, 64]]),
    ])
}

fn config(relations: RelationSet) -> SamplerConfig {
    SamplerConfig {
        relations,
        ..Default::default()
    }
}

#[test]
fn anchor_is_uniform() {
    let m = manifest(&[("a", &[&[100, 100]]), ("b", &[&[100, 100]])]);
    let mut rng = seed::rng(17);
    let n = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[sample_anchor(&m, &mut rng).unwrap()] += 1;
    }
    // 5 sigma binomial band around 1/4.
    let band = 5.0 * (0.25f64 * 0.75 / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() < band, "{counts:?}");
    }
    let one = manifest(&[("a", &[&[60]])]);
    assert_eq!(sample_anchor(&one, &mut rng).unwrap(), 0);
    assert_eq!(
        sample_anchor(&m, &mut seed::rng(3)).unwrap(),
        sample_anchor(&m, &mut seed::rng(3)).unwrap()
    );
}

#[test]
fn partner_rules() {
    let m = mixed();
    let mut rng = seed::rng(5);
    for _ in 0..200 {
        let p = sample_partner_cooccurrence(&m, 1, ShotCooccurrence, &mut rng).unwrap();
        assert!([0, 1, 2].contains(&p));
        let p = sample_partner_cooccurrence(&m, 1, VideoCooccurrence, &mut rng).unwrap();
        assert_eq!(p, 3);
        let p = sample_partner_cooccurrence(&m, 1, DatasetCooccurrence, &mut rng).unwrap();
        assert_ne!(m.segment(p).video_id, "v0");
    }
    // v2 has one shot.
    assert!(matches!(
        sample_partner_cooccurrence(&m, 6, VideoCooccurrence, &mut rng),
        Err(Error::NotSatisfiable(_))
    ));
    let two = manifest(&[("a", &[&[60]]), ("b", &[&[60]])]);
    for _ in 0..20 {
        assert_eq!(
            sample_partner_cooccurrence(&two, 0, DatasetCooccurrence, &mut rng).unwrap(),
            1
        );
    }
}

#[test]
fn labels_are_sound_and_clips_stay_in_segment() {
    let m = mixed();
    for aligned in [false, true] {
        let cfg = SamplerConfig {
            aligned,
            ..Default::default()
        };
        let plans = plan_stream(&m, &cfg, 99, 0..5000).unwrap();
        for p in &plans {
            assert_eq!(verify_label(&p.clip_a, &p.clip_b), p.label, "{p:?}");
            for clip in [&p.clip_a, &p.clip_b] {
                let seg = &m.segments()[m.index_of(&clip.provenance.segment_id).unwrap()];
                assert_eq!(clip.provenance.frame_indices.len(), 16);
                assert!(clip.provenance.frame_indices.iter().all(|&i| i < seg.len()));
                assert_eq!(clip.provenance.segment_start, seg.start);
                clip.transform.validate(16).unwrap();
            }
            if p.label == ShotCooccurrence && p.clip_a.provenance.segment_id == p.clip_b.provenance.segment_id {
                assert_ne!(p.clip_a.provenance.start_offset, p.clip_b.provenance.start_offset);
            }
            if let TransformDescriptor::Dilate { interval } = p.clip_b.transform {
                let idx = &p.clip_b.provenance.frame_indices;
                assert!(idx.windows(2).all(|w| w[1] - w[0] == interval));
            }
            if let TransformDescriptor::Shuffle { permutation } = &p.clip_b.transform {
                assert_eq!(&rank_permutation(&p.clip_b.provenance.frame_indices), permutation);
            }
            if p.label == Inverted {
                let idx = &p.clip_b.provenance.frame_indices;
                assert!(idx.windows(2).all(|w| w[0] == w[1] + 1));
            }
        }
    }
}

#[test]
fn category_frequencies_are_uniform() {
    // Every anchor can realize every relation here, so no fallback occurs.
    let m = manifest(&[
        ("v0", &[&[300, 300], &[80]]),
        ("v1", &[&[50], &[120]]),
        ("v2", &[&[200, 64], &[60]]),
    ]);
    let plans = plan_stream(&m, &SamplerConfig::default(), 1, 0..70_000).unwrap();
    let stats = StreamStats::of(&plans);
    assert!(stats.fallback_events.is_empty());
    for c in RelationCategory::ALL {
        let f = stats.clean[&c] as f64 / plans.len() as f64;
        assert!((f - 1.0 / 7.0).abs() < 0.02, "{c}: {f}");
    }
}

#[test]
fn category_draws_stay_uniform_with_fallbacks() {
    // v2 anchors cannot realize C_V; every draw, failed or not, is still uniform.
    let plans = plan_stream(&mixed(), &SamplerConfig::default(), 1, 0..70_000).unwrap();
    let stats = StreamStats::of(&plans);
    assert!(stats.fallback_events[&VideoCooccurrence] > 0);
    let mut draws: BTreeMap<RelationCategory, usize> = BTreeMap::new();
    for p in &plans {
        *draws.entry(p.label).or_default() += 1;
        for f in &p.fallbacks {
            *draws.entry(*f).or_default() += 1;
        }
    }
    let total: usize = draws.values().sum();
    for c in RelationCategory::ALL {
        let f = draws[&c] as f64 / total as f64;
        assert!((f - 1.0 / 7.0).abs() < 0.02, "{c}: {f}");
    }
}

#[test]
fn sped_up_interval_eligibility() {
    let m80 = manifest(&[("a", &[&[80]]), ("b", &[&[80]])]);
    let m50 = manifest(&[("a", &[&[50]]), ("b", &[&[50]])]);
    let cfg = config(RelationSet::new([SpedUp, Inverted]).unwrap());
    let mut seen80 = HashMap::new();
    let mut seen50 = HashMap::new();
    for i in 0..400 {
        for (m, seen) in [(&m80, &mut seen80), (&m50, &mut seen50)] {
            let p = make_sample_plan(m, &cfg, 4, i).unwrap();
            if let TransformDescriptor::Dilate { interval } = p.clip_b.transform {
                *seen.entry(interval).or_insert(0) += 1;
            }
        }
    }
    assert!(seen80[&2] > 50 && seen80[&4] > 50, "{seen80:?}");
    assert_eq!(seen50.keys().copied().collect::<Vec<_>>(), [2]);
}

#[test]
fn degenerate_corpus_names_failing_relations() {
    let m = manifest(&[("a", &[&[100]])]);
    let cfg = config(RelationSet::new([VideoCooccurrence, DatasetCooccurrence]).unwrap());
    match make_sample_plan(&m, &cfg, 0, 0) {
        Err(Error::DegenerateCorpus { categories }) => assert_eq!(categories, ["C_V", "C_D"]),
        other => panic!("{other:?}"),
    }
    assert!(check_satisfiable(&m, &cfg).is_err());
    assert!(check_satisfiable(&mixed(), &SamplerConfig::default()).is_ok());
}

#[test]
fn streams_are_deterministic() {
    let m = mixed();
    let cfg = SamplerConfig::default();
    let a = plan_stream(&m, &cfg, 8, 0..300).unwrap();
    let b: Vec<SamplePlan> = (0..300).map(|i| make_sample_plan(&m, &cfg, 8, i).unwrap()).collect();
    assert_eq!(a, b);
    assert_ne!(a, plan_stream(&m, &cfg, 9, 0..300).unwrap());
}

#[test]
fn sample_index_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.jsonl");
    let idx = SampleIndex::build(&mixed(), &SamplerConfig::default(), 50, 3, "fp".into()).unwrap();
    idx.write(&path).unwrap();
    let back = SampleIndex::read(&path).unwrap();
    assert_eq!(back, idx);
    assert_eq!(back.to_jsonl(), idx.to_jsonl());
}

fn toy_clip(rng: &mut impl Rng) -> Clip {
    let frames = (0..16)
        .map(|_| Frame::from_fn(112, 112, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()])))
        .collect();
    Clip {
        frames,
        provenance: ClipProvenance {
            segment_id: "s".into(),
            video_id: "v".into(),
            shot_id: "v/s000".into(),
            segment_start: 0,
            start_offset: 0,
            frame_indices: (0..16).collect(),
            crop: [0, 0],
        },
        transform: TransformDescriptor::None,
    }
}

#[test]
fn rotation_group_identities() {
    let mut rng = seed::rng(0);
    let clip = toy_clip(&mut rng);
    let twice = rotate_clip(&rotate_clip(&clip, Some(180), &mut rng).unwrap(), Some(180), &mut rng).unwrap();
    assert_eq!(twice, clip);
    let mut c = clip.clone();
    for _ in 0..4 {
        c = rotate_clip(&c, Some(90), &mut rng).unwrap();
    }
    assert_eq!(c, clip);
    for a in ROTATION_ANGLES {
        let r = rotate_clip(&clip, Some(a), &mut rng).unwrap();
        assert_eq!(r.transform, TransformDescriptor::Rotate { angle: a });
        assert_eq!(rotate_clip(&r, Some(360 - a), &mut rng).unwrap(), clip);
    }
}

#[test]
fn shuffle_preserves_multiset_and_inverts() {
    let mut rng = seed::rng(1);
    let clip = toy_clip(&mut rng);
    let sum = |f: &Frame| f.as_raw().iter().map(|&v| u64::from(v)).sum::<u64>();
    let mut before: Vec<u64> = clip.frames.iter().map(sum).collect();
    before.sort();
    for _ in 0..1000 {
        let s = shuffle_frames(&clip, &mut rng).unwrap();
        let TransformDescriptor::Shuffle { permutation } = &s.transform else {
            panic!("shuffle transform missing")
        };
        assert!(is_permutation(permutation) && !is_identity(permutation) && !is_reversal(permutation));
        let mut after: Vec<u64> = s.frames.iter().map(sum).collect();
        after.sort();
        assert_eq!(after, before);
        assert_eq!(unshuffle(&s).unwrap(), clip);
    }
    let mut short = clip.clone();
    short.frames.truncate(2);
    short.provenance.frame_indices.truncate(2);
    assert!(shuffle_frames(&short, &mut rng).is_err());
}

proptest! {
    #[test]
    fn randomized_transform_algebra(seed_v in any::<u64>(), len in 1usize..300, s in prop::sample::select(vec![2usize, 4])) {
        let mut rng = seed::rng(seed_v);
        let list: Vec<usize> = (0..len).collect();
        prop_assert_eq!(invert_segment_frames(&invert_segment_frames(&list)), list.clone());
        if len >= 3 {
            let p = random_permutation(len, &mut rng).unwrap();
            let shuffled: Vec<usize> = p.iter().map(|&i| list[i]).collect();
            let mut restored = vec![0; len];
            for (t, &r) in rank_permutation(&shuffled).iter().enumerate() {
                restored[r] = shuffled[t];
            }
            prop_assert_eq!(restored, list);
        }
        prop_assert_eq!(dilate_segment(len, s, 16).is_ok(), len >= s * 16);
    }
}

#[test]
fn materialized_clips_match_plans() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticCorpusSpec {
        num_videos: 2,
        shots_per_video: [2, 2],
        shot_length_range: [70, 90],
        seed: 21,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec, dir.path().join("corpus")).unwrap();
    let m = build_manifest(&corpus.videos, &ShotEditParams::default(), "fp".into()).unwrap();
    assert_eq!(m.len(), 4);
    let loader = FrameLoader::for_manifest(&m, &Default::default()).unwrap();
    let plans = plan_stream(&m, &SamplerConfig::default(), 2, 0..40).unwrap();
    for p in &plans {
        let sample = materialize(p, &loader).unwrap();
        assert_eq!(sample.label, p.label);
        for (clip, plan) in [(&sample.clip_a, &p.clip_a), (&sample.clip_b, &p.clip_b)] {
            clip.check_shape().unwrap();
            let abs: Vec<usize> = plan.provenance.absolute_frames().collect();
            let raw = loader.fetch(&plan.provenance.video_id, &abs).unwrap();
            for (t, f) in clip.frames.iter().enumerate() {
                let mut expect = crop_frame(&raw[t], plan.provenance.crop, 112).unwrap();
                if let TransformDescriptor::Rotate { angle } = plan.transform {
                    expect = rotate_frame(&expect, angle).unwrap();
                }
                assert_eq!(f, &expect);
            }
        }
    }
    let t = clips_to_tensor(&[&materialize(&plans[0], &loader).unwrap().clip_a]).unwrap();
    assert_eq!(t.dims(), [1, 3, 16, 112, 112]);
}
