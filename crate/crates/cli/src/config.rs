use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vidrel::backbone::{BackboneConfig, BackboneKind, Preset};
use vidrel::downstream::{ActionSetSpec, Distance, FinetuneConfig, RetrievalMode, DEFAULT_TOP_K};
use vidrel::relations::SamplerConfig;
use vidrel::shots::ShotEditParams;
use vidrel::train::TrainConfig;
use vidrel::video::{DecodeConfig, SyntheticCorpusSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub kind: BackboneKind,
    pub preset: Preset,
}

impl Default for BackboneSection {
    fn default() -> Self {
        Self {
            kind: BackboneKind::C3d,
            preset: Preset::Tiny,
        }
    }
}

impl BackboneSection {
    pub fn config(&self) -> BackboneConfig {
        BackboneConfig::preset(self.kind, self.preset)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesSection {
    /// Training samples in the index.
    pub count: usize,
    pub seed: u64,
}

impl Default for SamplesSection {
    fn default() -> Self {
        Self { count: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub distance: Distance,
    pub mode: RetrievalMode,
    pub top_k: Vec<usize>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            distance: Distance::Cosine,
            mode: RetrievalMode::Video,
            top_k: DEFAULT_TOP_K.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSection {
    /// 1-based backbone stage.
    pub stage: usize,
    pub alpha: f64,
    pub clip_start: usize,
}

impl Default for AttentionSection {
    fn default() -> Self {
        Self {
            stage: 5,
            alpha: 0.5,
            clip_start: 0,
        }
    }
}

/// Every stage's parameters plus the global seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub decode: DecodeConfig,
    pub synth: SyntheticCorpusSpec,
    pub actions: ActionSetSpec,
    pub shots: ShotEditParams,
    pub sampler: SamplerConfig,
    pub samples: SamplesSection,
    pub backbone: BackboneSection,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
    pub retrieval: RetrievalSection,
    pub attention: AttentionSection,
}

/// Sections that carry a seed of their own.
const SEEDED: [&str; 5] = ["synth", "actions", "samples", "train", "finetune"];

/// Per-stage seed derived from the global one; 63 bits so it survives TOML.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    vidrel::seed::mix_str(global, stage) >> 1
}

impl RunConfig {
    /// Parses a config document. Stage seeds not written explicitly are
    /// derived from the global seed.
    #[cfg(test)]
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_seed(text, None)
    }

    /// As [`Self::from_toml_str`], with `seed` replacing the document's global seed.
    pub fn from_toml_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        if let Some(s) = seed {
            let s = i64::try_from(s).context("--seed must fit in 63 bits")?;
            value.insert("seed".into(), toml::Value::Integer(s));
        }
        let mut cfg: RunConfig = value.clone().try_into().context("invalid configuration")?;
        let explicit: Vec<&str> = SEEDED
            .into_iter()
            .filter(|s| {
                value
                    .get(*s)
                    .and_then(|v| v.as_table())
                    .is_some_and(|t| t.contains_key("seed"))
            })
            .collect();
        cfg.derive_seeds(&explicit);
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_toml_with_seed(&text, seed).with_context(|| format!("in config {}", p.display()))
            }
            None => Self::from_toml_with_seed("", seed),
        }
    }

    /// Re-derives every stage seed not listed in `keep`.
    pub fn derive_seeds(&mut self, keep: &[&str]) {
        let g = self.seed;
        let pick = |name: &str, current: u64| {
            if keep.contains(&name) {
                current
            } else {
                stage_seed(g, name)
            }
        };
        self.synth.seed = pick("synth", self.synth.seed);
        self.actions.seed = pick("actions", self.actions.seed);
        self.samples.seed = pick("samples", self.samples.seed);
        self.train.seed = pick("train", self.train.seed);
        self.finetune.seed = pick("finetune", self.finetune.seed);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("cannot serialize the resolved configuration")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.actions.validate()?;
        self.shots.threshold.validate()?;
        self.shots.hog.validate()?;
        self.train.validate()?;
        self.finetune.validate()?;
        self.backbone.config().validate()?;
        anyhow::ensure!(self.samples.count > 0, "samples.count must be positive");
        anyhow::ensure!(
            !self.retrieval.top_k.is_empty() && !self.retrieval.top_k.contains(&0),
            "retrieval.top_k must list positive cut-offs"
        );
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.attention.alpha),
            "attention.alpha must lie in [0, 1]"
        );
        Ok(())
    }

    /// Fingerprint of the configuration a manifest depends on.
    pub fn manifest_fingerprint(&self) -> String {
        vidrel::fingerprint::fingerprint(&serde_json::json!({ "shots": self.shots }))
    }

    pub fn samples_fingerprint(&self) -> String {
        vidrel::fingerprint::fingerprint(&serde_json::json!({
            "shots": self.shots,
            "sampler": self.sampler,
            "samples": self.samples,
        }))
    }

    pub fn pretrain_fingerprint(&self) -> String {
        vidrel::fingerprint::fingerprint(&serde_json::json!({
            "shots": self.shots,
            "sampler": self.sampler,
            "samples": self.samples,
            "backbone": self.backbone,
            "train": self.train,
        }))
    }

    pub fn synth_fingerprint(&self) -> String {
        vidrel::fingerprint::fingerprint(&serde_json::json!({ "synth": self.synth, "actions": self.actions }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults_with_derived_seeds() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.train.seed, stage_seed(0, "train"));
        assert_ne!(c.train.seed, c.finetune.seed);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("sed = 3").is_err());
        assert!(RunConfig::from_toml_str("[train]\nlearning_rte = 0.1").is_err());
    }

    #[test]
    fn explicit_stage_seed_kept() {
        let c = RunConfig::from_toml_str("seed = 5\n[train]\nseed = 42").unwrap();
        assert_eq!(c.train.seed, 42);
        assert_eq!(c.synth.seed, stage_seed(5, "synth"));
    }

    #[test]
    fn seed_flag_overrides_document() {
        let c = RunConfig::from_toml_with_seed("seed = 5\n[train]\nseed = 42", Some(9)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.seed, 42);
        assert_eq!(c.synth.seed, stage_seed(9, "synth"));
        assert!(RunConfig::from_toml_with_seed("", Some(u64::MAX)).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c =
            RunConfig::from_toml_str("seed = 7\n[backbone]\nkind = \"r3d\"\n[sampler]\nrelations = [\"C_S\", \"P_I\"]")
                .unwrap();
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
