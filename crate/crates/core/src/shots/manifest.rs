use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::{detect_shot_changes, Shot, Threshold};
use super::hog::HogParams;
use super::segment::{segment_shots, Segment, DEFAULT_MIN_LEN, DEFAULT_SEGMENT_LEN};
use crate::error::{input_err, Error, Result};
use crate::video::RawVideo;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotEditParams {
    /// Segment length K.
    pub k: usize,
    pub min_len: usize,
    pub threshold: Threshold,
    pub hog: HogParams,
}

impl Default for ShotEditParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_SEGMENT_LEN,
            min_len: DEFAULT_MIN_LEN,
            threshold: Threshold::default(),
            hog: HogParams::default(),
        }
    }
}

/// One manifest line per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub video_id: String,
    pub shot_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub source_path: PathBuf,
}

/// First manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub fingerprint: String,
    pub params: ShotEditParams,
    pub videos: usize,
    pub shots: usize,
    pub segments: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: ManifestHeader,
}

/// The merged segment set with shot and video indexes.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    header: ManifestHeader,
    segments: Vec<Segment>,
    sources: BTreeMap<String, PathBuf>,
    by_shot: BTreeMap<String, Vec<usize>>,
    by_video: BTreeMap<String, Vec<usize>>,
}

impl Manifest {
    pub fn new(
        segments: Vec<Segment>,
        sources: BTreeMap<String, PathBuf>,
        params: ShotEditParams,
        videos: usize,
        shots: usize,
        fingerprint: String,
    ) -> Result<Self> {
        let mut by_shot: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_video: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for (i, s) in segments.iter().enumerate() {
            if !seen.insert(s.segment_id.as_str()) {
                return Err(input_err!("duplicate segment id {}", s.segment_id));
            }
            if !sources.contains_key(&s.video_id) {
                return Err(input_err!(
                    "segment {} has no source for video {}",
                    s.segment_id,
                    s.video_id
                ));
            }
            by_shot.entry(s.shot_id.clone()).or_default().push(i);
            by_video.entry(s.video_id.clone()).or_default().push(i);
        }
        let header = ManifestHeader {
            fingerprint,
            params,
            videos,
            shots,
            segments: segments.len(),
        };
        Ok(Self {
            header,
            segments,
            sources,
            by_shot,
            by_video,
        })
    }

    pub fn header(&self) -> &ManifestHeader {
        &self.header
    }

    pub fn fingerprint(&self) -> &str {
        &self.header.fingerprint
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn index_of(&self, segment_id: &str) -> Option<usize> {
        // Segment ids sort in manifest order within a video; a linear scan keeps this simple.
        self.segments.iter().position(|s| s.segment_id == segment_id)
    }

    /// Segment indexes of one shot, in manifest order.
    pub fn shot_segments(&self, shot_id: &str) -> &[usize] {
        self.by_shot.get(shot_id).map_or(&[], Vec::as_slice)
    }

    pub fn video_segments(&self, video_id: &str) -> &[usize] {
        self.by_video.get(video_id).map_or(&[], Vec::as_slice)
    }

    /// Shots that own at least one segment.
    pub fn shot_ids(&self) -> impl Iterator<Item = &str> {
        self.by_shot.keys().map(String::as_str)
    }

    /// Videos that own at least one segment.
    pub fn video_ids(&self) -> impl Iterator<Item = &str> {
        self.by_video.keys().map(String::as_str)
    }

    pub fn source(&self, video_id: &str) -> Option<&Path> {
        self.sources.get(video_id).map(PathBuf::as_path)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let header = HeaderLine {
            header: self.header.clone(),
        };
        serde_json::to_writer(&mut out, &header).expect("serializable header");
        out.push(b'\n');
        for s in &self.segments {
            let rec = SegmentRecord {
                segment_id: s.segment_id.clone(),
                video_id: s.video_id.clone(),
                shot_id: s.shot_id.clone(),
                start_frame: s.start,
                end_frame: s.end,
                source_path: self.sources[&s.video_id].clone(),
            };
            serde_json::to_writer(&mut out, &rec).expect("serializable record");
            out.push(b'\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::format(path, "empty manifest"))?;
        let header: HeaderLine =
            serde_json::from_str(first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
        let mut segments = Vec::new();
        let mut sources = BTreeMap::new();
        for (n, line) in lines {
            let rec: SegmentRecord =
                serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            if rec.start_frame >= rec.end_frame {
                return Err(Error::format(path, format!("line {}: empty frame range", n + 1)));
            }
            match sources.get(&rec.video_id) {
                Some(p) if p != &rec.source_path => {
                    return Err(Error::format(
                        path,
                        format!("line {}: video {} has two source paths", n + 1, rec.video_id),
                    ))
                }
                _ => {
                    sources.insert(rec.video_id.clone(), rec.source_path);
                }
            }
            segments.push(Segment {
                segment_id: rec.segment_id,
                video_id: rec.video_id,
                shot_id: rec.shot_id,
                start: rec.start_frame,
                end: rec.end_frame,
            });
        }
        let h = header.header;
        if h.segments != segments.len() {
            return Err(Error::format(
                path,
                format!("header declares {} segments, found {}", h.segments, segments.len()),
            ));
        }
        Self::new(segments, sources, h.params, h.videos, h.shots, h.fingerprint)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Detects shots in every video; per-video work runs in parallel, results
/// stay in input order.
pub fn detect_corpus(videos: &[RawVideo], params: &ShotEditParams) -> Result<Vec<Vec<Shot>>> {
    videos
        .par_iter()
        .map(|v| detect_shot_changes(v, &params.threshold, &params.hog))
        .collect()
}

pub fn manifest_from_shots(
    videos: &[RawVideo],
    shots: &[Vec<Shot>],
    params: &ShotEditParams,
    fingerprint: String,
) -> Result<Manifest> {
    let mut segments = Vec::new();
    let mut sources = BTreeMap::new();
    for (video, video_shots) in videos.iter().zip(shots) {
        let segs = segment_shots(video_shots, params.k, params.min_len)?;
        if !segs.is_empty() {
            sources.insert(video.video_id.clone(), video.source_path.clone());
        }
        segments.extend(segs);
    }
    let shot_count = shots.iter().map(Vec::len).sum();
    Manifest::new(segments, sources, *params, videos.len(), shot_count, fingerprint)
}

pub fn build_manifest(videos: &[RawVideo], params: &ShotEditParams, fingerprint: String) -> Result<Manifest> {
    if videos.is_empty() {
        return Err(input_err!("cannot build a manifest from an empty corpus"));
    }
    let shots = detect_corpus(videos, params)?;
    manifest_from_shots(videos, &shots, params, fingerprint)
}
