use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::category::{RelationCategory, RelationSet};
use super::clip::{draw_crop, draw_offset, extract_clip_indices, Clip, ClipPlan, ClipProvenance};
use super::loader::FrameLoader;
use super::transform::{
    dilate_segment, eligible_intervals, invert_segment_frames, is_identity, is_reversal, random_permutation,
    rank_permutation, TransformDescriptor, ROTATION_ANGLES,
};
use crate::backbone::CLIP_LEN;
use crate::error::{input_err, Error, Result};
use crate::seed;
use crate::shots::Manifest;

use RelationCategory::*;

/// Redraws of a shuffled window whose ranks happen to be sorted or reversed.
const SHUFFLE_WINDOW_TRIES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub relations: RelationSet,
    pub clip_len: usize,
    /// Derive pattern clips from clip_a's own window instead of an
    /// independent draw from the transformed segment.
    pub aligned: bool,
    /// Category redraws after an unsatisfiable draw.
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            relations: RelationSet::all(),
            clip_len: CLIP_LEN,
            aligned: false,
            max_retries: 16,
        }
    }
}

/// Pixel-free description of one training triple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub index: u64,
    pub label: RelationCategory,
    pub rng_seed: u64,
    /// Categories drawn and found unsatisfiable before `label`, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallbacks: Vec<RelationCategory>,
    pub clip_a: ClipPlan,
    pub clip_b: ClipPlan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationSample {
    pub clip_a: Clip,
    pub clip_b: Clip,
    pub label: RelationCategory,
    pub rng_seed: u64,
}

/// Uniform segment index.
pub fn sample_anchor<R: Rng>(manifest: &Manifest, rng: &mut R) -> Result<usize> {
    if manifest.is_empty() {
        return Err(input_err!("manifest has no segments"));
    }
    Ok(rng.gen_range(0..manifest.len()))
}

/// Uniform partner among the segments eligible for a cooccurrence relation.
pub fn sample_partner_cooccurrence<R: Rng>(
    manifest: &Manifest,
    anchor: usize,
    category: RelationCategory,
    rng: &mut R,
) -> Result<usize> {
    let a = manifest.segment(anchor);
    match category {
        ShotCooccurrence => {
            let pool = manifest.shot_segments(&a.shot_id);
            Ok(pool[rng.gen_range(0..pool.len())])
        }
        VideoCooccurrence => {
            let pool: Vec<usize> = manifest
                .video_segments(&a.video_id)
                .iter()
                .copied()
                .filter(|&i| manifest.segment(i).shot_id != a.shot_id)
                .collect();
            if pool.is_empty() {
                return Err(Error::NotSatisfiable(format!("video {} has a single shot", a.video_id)));
            }
            Ok(pool[rng.gen_range(0..pool.len())])
        }
        DatasetCooccurrence => {
            let own = manifest.video_segments(&a.video_id).len();
            if own == manifest.len() {
                return Err(Error::NotSatisfiable("corpus has a single video".into()));
            }
            // Rejection keeps the draw uniform over other videos' segments.
            loop {
                let i = rng.gen_range(0..manifest.len());
                if manifest.segment(i).video_id != a.video_id {
                    return Ok(i);
                }
            }
        }
        other => Err(input_err!("{other} is not a cooccurrence relation")),
    }
}

fn provenance(
    manifest: &Manifest,
    segment: usize,
    start_offset: usize,
    frame_indices: Vec<usize>,
    crop: [usize; 2],
) -> ClipProvenance {
    let s = manifest.segment(segment);
    ClipProvenance {
        segment_id: s.segment_id.clone(),
        video_id: s.video_id.clone(),
        shot_id: s.shot_id.clone(),
        segment_start: s.start,
        start_offset,
        frame_indices,
        crop,
    }
}

fn plain_clip<R: Rng>(
    manifest: &Manifest,
    segment: usize,
    k: usize,
    max_offset: Option<usize>,
    rng: &mut R,
) -> Result<ClipPlan> {
    let len = manifest.segment(segment).len();
    let room = max_offset.map_or(len, |m| (m + k).min(len));
    let start = draw_offset(room, k, rng)?;
    Ok(ClipPlan {
        provenance: provenance(manifest, segment, start, (start..start + k).collect(), draw_crop(rng)),
        transform: TransformDescriptor::None,
    })
}

fn from_list<R: Rng>(
    manifest: &Manifest,
    segment: usize,
    list: &[usize],
    k: usize,
    transform: TransformDescriptor,
    rng: &mut R,
) -> Result<ClipPlan> {
    let (start, indices) = extract_clip_indices(list, k, rng)?;
    Ok(ClipPlan {
        provenance: provenance(manifest, segment, start, indices, draw_crop(rng)),
        transform,
    })
}

/// Clip pair for one category and anchor, or `NotSatisfiable`.
pub fn plan_pair<R: Rng>(
    manifest: &Manifest,
    anchor: usize,
    category: RelationCategory,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(ClipPlan, ClipPlan)> {
    let k = config.clip_len;
    let len = manifest.segment(anchor).len();
    if len < k {
        return Err(Error::NotSatisfiable(format!(
            "segment of {len} frames is shorter than a clip"
        )));
    }
    if category == SpedUp {
        let intervals = eligible_intervals(len, k);
        if intervals.is_empty() {
            return Err(Error::NotSatisfiable(format!(
                "segment of {len} frames too short to dilate"
            )));
        }
        let s = intervals[rng.gen_range(0..intervals.len())];
        let transform = TransformDescriptor::Dilate { interval: s };
        if config.aligned {
            let a = plain_clip(manifest, anchor, k, Some(len - 1 - (k - 1) * s), rng)?;
            let start = a.provenance.start_offset;
            let b = ClipPlan {
                provenance: ClipProvenance {
                    start_offset: start,
                    frame_indices: (0..k).map(|j| start + j * s).collect(),
                    ..a.provenance.clone()
                },
                transform,
            };
            return Ok((a, b));
        }
        let a = plain_clip(manifest, anchor, k, None, rng)?;
        let b = from_list(manifest, anchor, &dilate_segment(len, s, k)?, k, transform, rng)?;
        return Ok((a, b));
    }

    let a = plain_clip(manifest, anchor, k, None, rng)?;
    let b = match category {
        ShotCooccurrence | VideoCooccurrence | DatasetCooccurrence => {
            let partner = sample_partner_cooccurrence(manifest, anchor, category, rng)?;
            let mut b = plain_clip(manifest, partner, k, None, rng)?;
            if partner == anchor && b.provenance.start_offset == a.provenance.start_offset {
                if len == k {
                    return Err(Error::NotSatisfiable("self-partner needs two distinct offsets".into()));
                }
                // Uniform over the other len - k offsets.
                let mut o = rng.gen_range(0..len - k);
                if o >= a.provenance.start_offset {
                    o += 1;
                }
                b.provenance.start_offset = o;
                b.provenance.frame_indices = (o..o + k).collect();
            }
            b
        }
        RotationCooccurrence => {
            let angle = ROTATION_ANGLES[rng.gen_range(0..ROTATION_ANGLES.len())];
            let transform = TransformDescriptor::Rotate { angle };
            if config.aligned {
                ClipPlan {
                    provenance: a.provenance.clone(),
                    transform,
                }
            } else {
                let mut b = plain_clip(manifest, anchor, k, None, rng)?;
                b.transform = transform;
                b
            }
        }
        Inverted => {
            if config.aligned {
                ClipPlan {
                    provenance: ClipProvenance {
                        frame_indices: invert_segment_frames(&a.provenance.frame_indices),
                        start_offset: len - k - a.provenance.start_offset,
                        ..a.provenance.clone()
                    },
                    transform: TransformDescriptor::Invert,
                }
            } else {
                let reversed: Vec<usize> = invert_segment_frames(&(0..len).collect::<Vec<_>>());
                from_list(manifest, anchor, &reversed, k, TransformDescriptor::Invert, rng)?
            }
        }
        Disordered => {
            if config.aligned {
                let perm = random_permutation(k, rng)?;
                let indices = perm.iter().map(|&r| a.provenance.frame_indices[r]).collect();
                ClipPlan {
                    provenance: ClipProvenance {
                        frame_indices: indices,
                        ..a.provenance.clone()
                    },
                    transform: TransformDescriptor::Shuffle { permutation: perm },
                }
            } else {
                let mut found = None;
                for _ in 0..SHUFFLE_WINDOW_TRIES {
                    let order = random_permutation(len, rng)?;
                    let (start, window) = extract_clip_indices(&order, k, rng)?;
                    let ranks = rank_permutation(&window);
                    if !is_identity(&ranks) && !is_reversal(&ranks) {
                        found = Some(ClipPlan {
                            provenance: provenance(manifest, anchor, start, window, draw_crop(rng)),
                            transform: TransformDescriptor::Shuffle { permutation: ranks },
                        });
                        break;
                    }
                }
                found.ok_or_else(|| Error::NotSatisfiable("no disordered window found".into()))?
            }
        }
        SpedUp => unreachable!("handled above"),
    };
    Ok((a, b))
}

/// Plans sample `index` of the stream seeded by `stream_seed`. The category is
/// uniform over the active set; unsatisfiable draws are retried with a fresh
/// category and anchor and recorded as fallbacks.
pub fn make_sample_plan(
    manifest: &Manifest,
    config: &SamplerConfig,
    stream_seed: u64,
    index: u64,
) -> Result<SamplePlan> {
    let rng_seed = seed::mix(stream_seed, index);
    let mut rng = seed::rng(rng_seed);
    let active = config.relations.categories();
    let mut fallbacks = Vec::new();
    for _ in 0..=config.max_retries {
        let category = active[rng.gen_range(0..active.len())];
        let anchor = sample_anchor(manifest, &mut rng)?;
        match plan_pair(manifest, anchor, category, config, &mut rng) {
            Ok((clip_a, clip_b)) => {
                return Ok(SamplePlan {
                    index,
                    label: category,
                    rng_seed,
                    fallbacks,
                    clip_a,
                    clip_b,
                })
            }
            Err(Error::NotSatisfiable(_)) => fallbacks.push(category),
            Err(e) => return Err(e),
        }
    }
    fallbacks.sort();
    fallbacks.dedup();
    Err(Error::DegenerateCorpus {
        categories: fallbacks.iter().map(|c| c.code().to_string()).collect(),
    })
}

/// Plans for indexes `range`; computed in parallel, identical to a serial run.
pub fn plan_stream(
    manifest: &Manifest,
    config: &SamplerConfig,
    stream_seed: u64,
    range: Range<u64>,
) -> Result<Vec<SamplePlan>> {
    range
        .into_par_iter()
        .map(|i| make_sample_plan(manifest, config, stream_seed, i))
        .collect()
}

/// Checks that every active relation can be realized somewhere in the corpus.
pub fn check_satisfiable(manifest: &Manifest, config: &SamplerConfig) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::Config("manifest has no segments".into()));
    }
    let k = config.clip_len;
    let mut missing = Vec::new();
    for &c in config.relations.categories() {
        let ok = match c {
            ShotCooccurrence => manifest
                .segments()
                .iter()
                .any(|s| s.len() > k || manifest.shot_segments(&s.shot_id).len() > 1),
            VideoCooccurrence => manifest.video_ids().any(|v| {
                let segs = manifest.video_segments(v);
                segs.iter()
                    .any(|&i| manifest.segment(i).shot_id != manifest.segment(segs[0]).shot_id)
            }),
            DatasetCooccurrence => manifest.video_ids().count() > 1,
            SpedUp => manifest.segments().iter().any(|s| s.len() >= 2 * k),
            Disordered => manifest.segments().iter().any(|s| s.len() >= k.max(3)),
            _ => manifest.segments().iter().any(|s| s.len() >= k),
        };
        if !ok {
            missing.push(c.code().to_string());
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "relations [{}] cannot be realized on this manifest",
            missing.join(", ")
        )))
    }
}

/// Recovers the label from provenance and transform descriptors alone.
pub fn verify_label(a: &ClipPlan, b: &ClipPlan) -> RelationCategory {
    match b.transform {
        TransformDescriptor::Rotate { .. } => RotationCooccurrence,
        TransformDescriptor::Invert => Inverted,
        TransformDescriptor::Shuffle { .. } => Disordered,
        TransformDescriptor::Dilate { .. } => SpedUp,
        TransformDescriptor::None => {
            let (pa, pb) = (&a.provenance, &b.provenance);
            if pa.shot_id == pb.shot_id {
                ShotCooccurrence
            } else if pa.video_id == pb.video_id {
                VideoCooccurrence
            } else {
                DatasetCooccurrence
            }
        }
    }
}

pub fn materialize(plan: &SamplePlan, loader: &FrameLoader) -> Result<RelationSample> {
    Ok(RelationSample {
        clip_a: loader.materialize(&plan.clip_a)?,
        clip_b: loader.materialize(&plan.clip_b)?,
        label: plan.label,
        rng_seed: plan.rng_seed,
    })
}

/// Draws one fully materialized sample; the stream position comes from `rng`.
pub fn make_sample<R: Rng>(
    manifest: &Manifest,
    loader: &FrameLoader,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<RelationSample> {
    let plan = make_sample_plan(manifest, config, rng.gen(), 0)?;
    materialize(&plan, loader)
}

/// Label counts split by whether a fallback preceded the sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub total: usize,
    pub clean: BTreeMap<RelationCategory, usize>,
    pub after_fallback: BTreeMap<RelationCategory, usize>,
    pub fallback_events: BTreeMap<RelationCategory, usize>,
}

impl StreamStats {
    pub fn of(plans: &[SamplePlan]) -> Self {
        let mut s = StreamStats {
            total: plans.len(),
            ..Default::default()
        };
        for p in plans {
            let bucket = if p.fallbacks.is_empty() {
                &mut s.clean
            } else {
                &mut s.after_fallback
            };
            *bucket.entry(p.label).or_default() += 1;
            for f in &p.fallbacks {
                *s.fallback_events.entry(*f).or_default() += 1;
            }
        }
        s
    }
}
