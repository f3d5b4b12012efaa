use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sampler::{plan_stream, SamplePlan, SamplerConfig};
use crate::error::{Error, Result};
use crate::shots::Manifest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleIndexHeader {
    pub fingerprint: String,
    pub manifest_fingerprint: String,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: SampleIndexHeader,
}

/// A fixed, replayable list of sample plans.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleIndex {
    pub header: SampleIndexHeader,
    pub plans: Vec<SamplePlan>,
}

impl SampleIndex {
    pub fn build(
        manifest: &Manifest,
        sampler: &SamplerConfig,
        count: usize,
        seed: u64,
        fingerprint: String,
    ) -> Result<Self> {
        let plans = plan_stream(manifest, sampler, seed, 0..count as u64)?;
        Ok(Self {
            header: SampleIndexHeader {
                fingerprint,
                manifest_fingerprint: manifest.fingerprint().to_string(),
                sampler: sampler.clone(),
                seed,
                count,
            },
            plans,
        })
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let header = HeaderLine {
            header: self.header.clone(),
        };
        serde_json::to_writer(&mut out, &header).expect("serializable header");
        out.push(b'\n');
        for p in &self.plans {
            serde_json::to_writer(&mut out, p).expect("serializable plan");
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
        let (_, first) = lines.next().ok_or_else(|| Error::format(path, "empty sample index"))?;
        let header: HeaderLine =
            serde_json::from_str(first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
        let plans = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
            .collect::<Result<Vec<SamplePlan>>>()?;
        if plans.len() != header.header.count {
            return Err(Error::format(
                path,
                format!("header declares {} samples, found {}", header.header.count, plans.len()),
            ));
        }
        Ok(Self {
            header: header.header,
            plans,
        })
    }
}
