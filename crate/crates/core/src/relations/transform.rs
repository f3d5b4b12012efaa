use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::clip::Clip;
use crate::error::{input_err, Error, Result};
use crate::video::Frame;

pub const ROTATION_ANGLES: [u16; 3] = [90, 180, 270];
pub const DILATION_INTERVALS: [usize; 2] = [2, 4];

/// Transform that produced a clip from its segment. Each variant carries
/// exactly the fields of its kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformDescriptor {
    #[default]
    None,
    /// Clockwise rotation of every frame.
    Rotate {
        angle: u16,
    },
    Invert,
    /// `permutation[t]` is the temporal rank, among the clip's frames, of the
    /// source frame shown at position `t`.
    Shuffle {
        permutation: Vec<usize>,
    },
    Dilate {
        interval: usize,
    },
}

impl TransformDescriptor {
    pub fn validate(&self, clip_len: usize) -> Result<()> {
        match self {
            TransformDescriptor::Rotate { angle } if !ROTATION_ANGLES.contains(angle) => {
                Err(input_err!("rotation angle {angle} not in {{90, 180, 270}}"))
            }
            TransformDescriptor::Dilate { interval } if !DILATION_INTERVALS.contains(interval) => {
                Err(input_err!("dilation interval {interval} not in {{2, 4}}"))
            }
            TransformDescriptor::Shuffle { permutation } => {
                if permutation.len() != clip_len || !is_permutation(permutation) {
                    return Err(input_err!("shuffle permutation is not a bijection on 0..{clip_len}"));
                }
                if is_identity(permutation) || is_reversal(permutation) {
                    return Err(input_err!("shuffle permutation is the identity or the reversal"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

pub fn is_identity(p: &[usize]) -> bool {
    p.iter().enumerate().all(|(i, &v)| i == v)
}

pub fn is_reversal(p: &[usize]) -> bool {
    let n = p.len();
    p.iter().enumerate().all(|(i, &v)| v == n - 1 - i)
}

/// `output[t] = input[n - 1 - t]`.
pub fn invert_segment_frames<T: Clone>(frames: &[T]) -> Vec<T> {
    frames.iter().rev().cloned().collect()
}

/// Uniform permutation of `0..n` conditioned on being neither the identity
/// nor the full reversal.
pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(input_err!("shuffling needs at least 3 frames, got {n}"));
    }
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if !is_identity(&p) && !is_reversal(&p) {
            return Ok(p);
        }
    }
}

/// Ranks of `values`: `ranks[t]` is the number of entries smaller than `values[t]`.
pub fn rank_permutation(values: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = rank;
    }
    ranks
}

/// Every `interval`-th index of `0..len`. The result must still hold a
/// `clip_len` clip, so `len >= interval * clip_len`.
pub fn dilate_segment(len: usize, interval: usize, clip_len: usize) -> Result<Vec<usize>> {
    if interval == 0 {
        return Err(input_err!("dilation interval must be positive"));
    }
    if len < interval * clip_len {
        return Err(Error::NotSatisfiable(format!(
            "{len} frames at interval {interval} leave {} < {clip_len} frames",
            len.div_ceil(interval)
        )));
    }
    Ok((0..len).step_by(interval).collect())
}

/// Intervals from {2, 4} compatible with a segment of `len` frames.
pub fn eligible_intervals(len: usize, clip_len: usize) -> Vec<usize> {
    DILATION_INTERVALS.into_iter().filter(|s| len >= s * clip_len).collect()
}

/// Clockwise rotation of a square frame.
pub fn rotate_frame(frame: &Frame, angle: u16) -> Result<Frame> {
    if frame.width() != frame.height() {
        return Err(input_err!(
            "rotation needs square frames, got {}x{}",
            frame.height(),
            frame.width()
        ));
    }
    Ok(match angle % 360 {
        0 => frame.clone(),
        90 => image::imageops::rotate90(frame),
        180 => image::imageops::rotate180(frame),
        270 => image::imageops::rotate270(frame),
        other => return Err(input_err!("rotation angle {other} is not a multiple of 90")),
    })
}

/// Rotates every frame of `clip` by `angle` (drawn from {90, 180, 270} when
/// `None`). Rotations compose; a full turn clears the transform.
pub fn rotate_clip<R: Rng>(clip: &Clip, angle: Option<u16>, rng: &mut R) -> Result<Clip> {
    let angle = match angle {
        Some(a) => a,
        None => ROTATION_ANGLES[rng.gen_range(0..ROTATION_ANGLES.len())],
    };
    let total = match &clip.transform {
        TransformDescriptor::None => angle % 360,
        TransformDescriptor::Rotate { angle: prior } => (prior + angle) % 360,
        other => return Err(input_err!("cannot rotate a clip already carrying {other:?}")),
    };
    let frames = clip
        .frames
        .iter()
        .map(|f| rotate_frame(f, angle))
        .collect::<Result<Vec<_>>>()?;
    let mut out = clip.clone();
    out.frames = frames;
    out.transform = if total == 0 {
        TransformDescriptor::None
    } else {
        TransformDescriptor::Rotate { angle: total }
    };
    Ok(out)
}

/// Reorders the frames of an untransformed clip by a random permutation that
/// is neither the identity nor the reversal.
pub fn shuffle_frames<R: Rng>(clip: &Clip, rng: &mut R) -> Result<Clip> {
    if clip.transform != TransformDescriptor::None {
        return Err(input_err!(
            "cannot shuffle a clip already carrying {:?}",
            clip.transform
        ));
    }
    let k = clip.frames.len();
    let perm = random_permutation(k, rng)?;
    let mut out = clip.clone();
    out.frames = perm.iter().map(|&i| clip.frames[i].clone()).collect();
    out.provenance.frame_indices = perm.iter().map(|&i| clip.provenance.frame_indices[i]).collect();
    out.transform = TransformDescriptor::Shuffle { permutation: perm };
    Ok(out)
}

/// Restores temporal order of a shuffled clip.
pub fn unshuffle(clip: &Clip) -> Result<Clip> {
    let TransformDescriptor::Shuffle { permutation } = &clip.transform else {
        return Err(input_err!("clip is not shuffled"));
    };
    let mut frames = vec![None; permutation.len()];
    let mut indices = vec![0; permutation.len()];
    for (t, &rank) in permutation.iter().enumerate() {
        frames[rank] = Some(clip.frames[t].clone());
        indices[rank] = clip.provenance.frame_indices[t];
    }
    let mut out = clip.clone();
    out.frames = frames.into_iter().map(|f| f.expect("bijection")).collect();
    out.provenance.frame_indices = indices;
    out.transform = TransformDescriptor::None;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_segment_frames(&[0, 1, 2, 3]), [3, 2, 1, 0]);
        assert_eq!(invert_segment_frames(&[5]), [5]);
        let v: Vec<usize> = (0..9).collect();
        assert_eq!(invert_segment_frames(&invert_segment_frames(&v)), v);
    }

    #[test]
    fn dilation_examples() {
        let d = dilate_segment(128, 4, 16).unwrap();
        assert_eq!(d.len(), 32);
        assert_eq!(d.last(), Some(&124));
        let d = dilate_segment(64, 2, 16).unwrap();
        assert_eq!(d.len(), 32);
        assert!(d.windows(2).all(|w| w[1] - w[0] == 2));
        assert!(matches!(dilate_segment(48, 4, 16), Err(Error::NotSatisfiable(_))));
        assert_eq!(eligible_intervals(80, 16), [2, 4]);
        assert_eq!(eligible_intervals(50, 16), [2]);
        assert!(eligible_intervals(31, 16).is_empty());
    }

    #[test]
    fn single_pixel_rotation_oracle() {
        let n = 5u32;
        for (r, c) in [(0u32, 1u32), (2, 4), (3, 0)] {
            let mut f = Frame::new(n, n);
            f.put_pixel(c, r, image::Rgb([255, 0, 0]));
            // Clockwise quarter turn: (r, c) -> (c, n - 1 - r).
            let g = rotate_frame(&f, 90).unwrap();
            assert_eq!(g.get_pixel(n - 1 - r, c).0, [255, 0, 0]);
            assert_eq!(g.pixels().filter(|p| p.0[0] == 255).count(), 1);
        }
    }

    #[test]
    fn non_square_rotation_rejected() {
        assert!(rotate_frame(&Frame::new(4, 3), 90).is_err());
    }

    #[test]
    fn short_shuffle_rejected() {
        assert!(random_permutation(2, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn exhaustive_k3_permutations() {
        let mut seen = std::collections::HashSet::new();
        let mut rng = seed::rng(1);
        for _ in 0..500 {
            seen.insert(random_permutation(3, &mut rng).unwrap());
        }
        // 3! minus identity and reversal.
        assert_eq!(seen.len(), 4);
    }

    proptest! {
        #[test]
        fn ranks_invert_permutations(seed_v in any::<u64>(), n in 3usize..40) {
            let p = random_permutation(n, &mut seed::rng(seed_v)).unwrap();
            prop_assert!(is_permutation(&p));
            prop_assert!(!is_identity(&p) && !is_reversal(&p));
            prop_assert_eq!(rank_permutation(&p), p);
        }

        #[test]
        fn dilation_gaps(len in 1usize..400, s in prop::sample::select(vec![2usize, 4])) {
            match dilate_segment(len, s, 16) {
                Ok(d) => {
                    prop_assert!(len >= s * 16);
                    prop_assert_eq!(d.len(), len.div_ceil(s));
                    prop_assert!(d.windows(2).all(|w| w[1] - w[0] == s));
                    prop_assert!(*d.last().unwrap() < len);
                }
                Err(_) => prop_assert!(len < s * 16),
            }
        }
    }
}
