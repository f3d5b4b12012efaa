use std::collections::BTreeMap;

use super::clip::{assemble_clip, Clip, ClipPlan};
use crate::error::{input_err, Result};
use crate::shots::Manifest;
use crate::video::{DecodeConfig, Frame, RawVideo, SourceFormat};

/// Opens every source video of a manifest and decodes frames on request.
/// Read-only, so one loader may serve many worker threads.
#[derive(Clone, Debug)]
pub struct FrameLoader {
    videos: BTreeMap<String, RawVideo>,
}

impl FrameLoader {
    pub fn new(videos: impl IntoIterator<Item = RawVideo>) -> Self {
        Self {
            videos: videos.into_iter().map(|v| (v.video_id.clone(), v)).collect(),
        }
    }

    pub fn for_manifest(manifest: &Manifest, decode: &DecodeConfig) -> Result<Self> {
        let mut videos = BTreeMap::new();
        for id in manifest.video_ids() {
            let path = manifest.source(id).expect("manifest indexes sources");
            let mut video = RawVideo::open(path, decode)?;
            // Archives carry their own id; the manifest's id is authoritative.
            video.video_id = id.to_string();
            videos.insert(id.to_string(), video);
        }
        Ok(Self { videos })
    }

    pub fn video(&self, video_id: &str) -> Result<&RawVideo> {
        self.videos
            .get(video_id)
            .ok_or_else(|| input_err!("unknown video {video_id}"))
    }

    /// Canonical-size frames at the given absolute indices, in the given order.
    pub fn fetch(&self, video_id: &str, indices: &[usize]) -> Result<Vec<Frame>> {
        let video = self.video(video_id)?;
        match video.format {
            SourceFormat::FrameArchive => indices.iter().map(|&i| video.decode_frame(i)).collect(),
            SourceFormat::Container => {
                let (Some(&lo), Some(&hi)) = (indices.iter().min(), indices.iter().max()) else {
                    return Ok(Vec::new());
                };
                let span = video.decode_frames(lo..hi + 1)?.into_frames();
                Ok(indices.iter().map(|&i| span[i - lo].clone()).collect())
            }
        }
    }

    pub fn materialize(&self, plan: &ClipPlan) -> Result<Clip> {
        let p = &plan.provenance;
        let absolute: Vec<usize> = p.absolute_frames().collect();
        let frames = self.fetch(&p.video_id, &absolute)?;
        assemble_clip(plan, &frames)
    }
}
