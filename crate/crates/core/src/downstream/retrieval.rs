use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{decode_video, test_clips};
use crate::backbone::Backbone;
use crate::error::{input_err, Error, Result};
use crate::relations::frames_to_tensor;
use crate::video::{Frame, RawVideo};

/// Retrieval cut-offs of the reported table.
pub const DEFAULT_TOP_K: [usize; 5] = [1, 5, 10, 20, 50];

/// Per-video feature summary: ten test-clip features and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoDescriptor {
    pub video_id: String,
    pub label: Option<usize>,
    pub vector: Vec<f64>,
    pub clip_vectors: Vec<Vec<f64>>,
}

impl VideoDescriptor {
    pub fn from_clips(video_id: impl Into<String>, clip_vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = clip_vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| input_err!("descriptor needs clips"))?;
        if clip_vectors.iter().any(|c| c.len() != dim) {
            return Err(input_err!("clip features of one video must share a dimension"));
        }
        let mut vector = vec![0.0; dim];
        for c in &clip_vectors {
            for (v, x) in vector.iter_mut().zip(c) {
                *v += x;
            }
        }
        vector.iter_mut().for_each(|v| *v /= clip_vectors.len() as f64);
        Ok(Self {
            video_id: video_id.into(),
            label: None,
            vector,
            clip_vectors,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Single-stack features of the ten uniformly spaced center-cropped clips.
pub fn descriptor_from_frames(backbone: &Backbone, video_id: &str, frames: &[Frame]) -> Result<VideoDescriptor> {
    let clips = test_clips(frames)?;
    let refs: Vec<&[Frame]> = clips.iter().map(Vec::as_slice).collect();
    let features = backbone.features(&frames_to_tensor(&refs)?)?;
    VideoDescriptor::from_clips(video_id, features.to_rows())
}

pub fn extract_descriptor(backbone: &Backbone, video: &RawVideo) -> Result<VideoDescriptor> {
    descriptor_from_frames(backbone, &video.video_id, &decode_video(video)?)
}

/// Descriptors for every video of a split, labeled, in split order.
pub fn extract_descriptors(backbone: &Backbone, dataset: &super::LabeledVideoDataset) -> Result<Vec<VideoDescriptor>> {
    dataset
        .videos
        .par_iter()
        .map(|v| Ok(extract_descriptor(backbone, &v.video)?.with_label(v.label)))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Cosine,
    Euclidean,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                // A zero vector has no direction; treat it as maximally distant.
                if na == 0.0 || nb == 0.0 {
                    2.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Distance::Cosine),
            "euclidean" => Ok(Distance::Euclidean),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

/// Query granularity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    /// One query per test video against mean-pooled training descriptors.
    #[default]
    Video,
    /// One query per test clip against every training clip.
    Clip,
}

impl std::str::FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "video" => Ok(RetrievalMode::Video),
            "clip" => Ok(RetrievalMode::Clip),
            other => Err(Error::Config(format!("unknown retrieval mode {other:?}"))),
        }
    }
}

/// Top-k accuracies in the `top1 top5 top10 top20 top50` layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTable {
    pub mode: RetrievalMode,
    pub distance: Distance,
    pub queries: usize,
    pub gallery: usize,
    /// `(k, accuracy)` in increasing `k`.
    pub top_k: Vec<(usize, f64)>,
}

impl RetrievalTable {
    pub fn columns(&self) -> Vec<String> {
        self.top_k.iter().map(|(k, _)| format!("top{k}")).collect()
    }

    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.top_k.iter().find(|(kk, _)| *kk == k).map(|(_, a)| *a)
    }

    /// `method,top1,...` header plus one row, accuracies in percent.
    pub fn to_csv(&self, method: &str) -> String {
        let mut out = format!("method,{}\n{method}", self.columns().join(","));
        for (_, a) in &self.top_k {
            write!(out, ",{:.1}", 100.0 * a).expect("string write");
        }
        out.push('\n');
        out
    }

    pub fn to_markdown(&self, method: &str) -> String {
        let cols = self.columns();
        let mut out = format!(
            "| Method | {} |\n|---|{}\n| {method} |",
            cols.join(" | "),
            "---|".repeat(cols.len())
        );
        for (_, a) in &self.top_k {
            write!(out, " {:.1} |", 100.0 * a).expect("string write");
        }
        out.push('\n');
        out
    }
}

struct Item<'a> {
    label: usize,
    vector: &'a [f64],
}

fn items<'a>(descriptors: &'a [VideoDescriptor], mode: RetrievalMode, role: &str) -> Result<Vec<Item<'a>>> {
    let mut out = Vec::new();
    for d in descriptors {
        let label = d
            .label
            .ok_or_else(|| input_err!("{role} descriptor {} has no class label", d.video_id))?;
        match mode {
            RetrievalMode::Video => out.push(Item {
                label,
                vector: &d.vector,
            }),
            RetrievalMode::Clip => out.extend(d.clip_vectors.iter().map(|v| Item { label, vector: v })),
        }
    }
    Ok(out)
}

/// Counts a query as correct at `k` when any of its `k` nearest gallery
/// entries shares its class. Distance ties break by gallery order.
pub fn retrieve(
    test: &[VideoDescriptor],
    train: &[VideoDescriptor],
    ks: &[usize],
    distance: Distance,
    mode: RetrievalMode,
) -> Result<RetrievalTable> {
    if test.is_empty() || train.is_empty() {
        return Err(input_err!("retrieval needs non-empty query and training sets"));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(input_err!("top-k cut-offs must be positive"));
    }
    let dim = train[0].dim();
    if let Some(d) = test.iter().chain(train).find(|d| d.dim() != dim) {
        return Err(input_err!(
            "descriptor {} has dimension {}, expected {dim}",
            d.video_id,
            d.dim()
        ));
    }
    let queries = items(test, mode, "test")?;
    let gallery = items(train, mode, "training")?;
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();

    // Rank of the first same-class gallery entry, per query.
    let first_hit: Vec<Option<usize>> = queries
        .par_iter()
        .map(|q| {
            let mut ranked: Vec<(f64, usize)> = gallery
                .iter()
                .enumerate()
                .map(|(i, g)| (distance.between(q.vector, g.vector), i))
                .collect();
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            ranked.iter().position(|&(_, i)| gallery[i].label == q.label)
        })
        .collect();
    let top_k = ks
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|r| r.is_some_and(|r| r < k)).count();
            (k, hits as f64 / queries.len() as f64)
        })
        .collect();
    Ok(RetrievalTable {
        mode,
        distance,
        queries: queries.len(),
        gallery: gallery.len(),
        top_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desc(id: &str, label: usize, v: Vec<f64>) -> VideoDescriptor {
        VideoDescriptor::from_clips(id, vec![v]).unwrap().with_label(label)
    }

    #[test]
    fn orthogonal_classes_retrieve_exactly() {
        let basis = |c: usize| (0..4).map(|i| if i == c { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let train: Vec<_> = (0..12).map(|i| desc(&format!("tr{i}"), i % 4, basis(i % 4))).collect();
        let test: Vec<_> = (0..8).map(|i| desc(&format!("te{i}"), i % 4, basis(i % 4))).collect();
        for d in [Distance::Cosine, Distance::Euclidean] {
            let t = retrieve(&test, &train, &DEFAULT_TOP_K, d, RetrievalMode::Video).unwrap();
            assert_eq!(t.accuracy(1), Some(1.0));
            assert_eq!(t.columns(), ["top1", "top5", "top10", "top20", "top50"]);
        }
    }

    #[test]
    fn large_k_covers_the_gallery() {
        let train = vec![desc("a", 0, vec![1.0, 0.0]), desc("b", 1, vec![0.0, 1.0])];
        let test = vec![desc("q", 1, vec![1.0, 0.01]), desc("r", 2, vec![1.0, 0.0])];
        let t = retrieve(&test, &train, &[1, 50], Distance::Cosine, RetrievalMode::Video).unwrap();
        assert_eq!(t.accuracy(1), Some(0.0));
        // class 2 never occurs in training
        assert_eq!(t.accuracy(50), Some(0.5));
    }

    #[test]
    fn descriptor_is_mean_of_clips() {
        let d = VideoDescriptor::from_clips("v", vec![vec![1.0, 2.0], vec![3.0, -2.0]]).unwrap();
        assert_eq!(d.vector, vec![2.0, 0.0]);
        let same = VideoDescriptor::from_clips("v", vec![vec![0.5, 1.5]; 10]).unwrap();
        assert_eq!(same.vector, vec![0.5, 1.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let train = vec![desc("a", 0, vec![1.0, 0.0])];
        let test = vec![desc("q", 0, vec![1.0])];
        assert!(matches!(
            retrieve(&test, &train, &[1], Distance::Cosine, RetrievalMode::Video),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn clip_mode_counts_clips() {
        let train = vec![VideoDescriptor::from_clips("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap()
            .with_label(0)];
        let test = vec![VideoDescriptor::from_clips("q", vec![vec![1.0, 0.1]; 3])
            .unwrap()
            .with_label(0)];
        let t = retrieve(&test, &train, &[1], Distance::Cosine, RetrievalMode::Clip).unwrap();
        assert_eq!((t.queries, t.gallery), (3, 2));
        assert_eq!(t.accuracy(1), Some(1.0));
    }

    #[test]
    fn table_layout() {
        let t = RetrievalTable {
            mode: RetrievalMode::Video,
            distance: Distance::Cosine,
            queries: 1,
            gallery: 1,
            top_k: DEFAULT_TOP_K.iter().map(|&k| (k, 0.5)).collect(),
        };
        assert_eq!(
            t.to_csv("ours"),
            "method,top1,top5,top10,top20,top50\nours,50.0,50.0,50.0,50.0,50.0\n"
        );
        assert!(t
            .to_markdown("ours")
            .starts_with("| Method | top1 | top5 | top10 | top20 | top50 |"));
    }

    proptest! {
        #[test]
        fn accuracy_is_monotone_in_k(
            train in prop::collection::vec((0usize..4, prop::collection::vec(-1.0f64..1.0, 3)), 1..30),
            test in prop::collection::vec((0usize..4, prop::collection::vec(-1.0f64..1.0, 3)), 1..20),
        ) {
            let tr: Vec<_> = train.into_iter().enumerate().map(|(i, (l, v))| desc(&format!("t{i}"), l, v)).collect();
            let te: Vec<_> = test.into_iter().enumerate().map(|(i, (l, v))| desc(&format!("q{i}"), l, v)).collect();
            for d in [Distance::Cosine, Distance::Euclidean] {
                let t = retrieve(&te, &tr, &[1, 2, 3, 5, 10, 20, 50], d, RetrievalMode::Video).unwrap();
                prop_assert!(t.top_k.windows(2).all(|w| w[0].1 <= w[1].1));
            }
        }
    }
}
