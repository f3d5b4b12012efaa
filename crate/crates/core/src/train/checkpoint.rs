use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::model::SiameseModel;
use crate::backbone::{Backbone, BackboneConfig};
use crate::error::{Error, Result};
use crate::fingerprint::hex;
use crate::nn::{ParamRole, ParamStore, Sgd};
use crate::relations::RelationSet;

/// Leading bytes of every parameter archive.
pub const ARCHIVE_MAGIC: &[u8; 8] = b"VRCKPT01";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockEntry {
    store: String,
    name: String,
    shape: Vec<usize>,
    role: ParamRole,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveHeader {
    kind: String,
    meta: serde_json::Value,
    blocks: Vec<BlockEntry>,
    payload_sha256: String,
}

/// Named parameter stores plus a JSON metadata document.
///
/// Layout: magic, little-endian `u64` header length, JSON header, then every
/// block's values as little-endian `f64` in header order. The header carries
/// a SHA-256 of the payload so truncation and bit rot are detected on load.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive {
    pub kind: String,
    pub meta: serde_json::Value,
    pub stores: Vec<(String, ParamStore)>,
}

impl TensorArchive {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            stores: Vec::new(),
        }
    }

    pub fn with_store(mut self, name: impl Into<String>, store: ParamStore) -> Self {
        self.stores.push((name.into(), store));
        self
    }

    pub fn store(&self, name: &str) -> Option<&ParamStore> {
        self.stores.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn take_store(&mut self, name: &str) -> Result<ParamStore> {
        let i = self
            .stores
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("archive has no {name:?} parameters")))?;
        Ok(self.stores.remove(i).1)
    }

    pub fn meta_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("bad {} metadata: {e}", self.kind)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut blocks = Vec::new();
        for (store_name, store) in &self.stores {
            for (_, p) in store.iter() {
                blocks.push(BlockEntry {
                    store: store_name.clone(),
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    role: p.role,
                });
                for v in &p.values {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = ArchiveHeader {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            blocks,
            payload_sha256: hex(&Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header).expect("serializable header");
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != ARCHIVE_MAGIC {
            return Err(corrupt("not a parameter archive (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: ArchiveHeader = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let payload = &bytes[header_end..];
        if hex(&Sha256::digest(payload)) != header.payload_sha256 {
            return Err(corrupt("payload checksum mismatch"));
        }
        let mut stores: Vec<(String, ParamStore)> = Vec::new();
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut consumed = 0;
        for b in header.blocks {
            let len: usize = b.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(len).collect();
            if data.len() != len {
                return Err(corrupt("payload shorter than declared blocks"));
            }
            consumed += len;
            let slot = match stores.iter().position(|(n, _)| *n == b.store) {
                Some(i) => i,
                None => {
                    stores.push((b.store.clone(), ParamStore::new()));
                    stores.len() - 1
                }
            };
            stores[slot].1.add(b.name, b.shape, b.role, data);
        }
        if consumed * 8 != payload.len() {
            return Err(corrupt("payload longer than declared blocks"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            stores,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn expect_kind(self, kind: &str) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} archive, found {}",
                self.kind
            )));
        }
        Ok(self)
    }
}

/// Copies `layout` with `values` substituted block by block.
fn store_like(layout: &ParamStore, values: &[Vec<f64>]) -> ParamStore {
    let mut out = ParamStore::new();
    for ((_, p), v) in layout.iter().zip(values) {
        out.add(p.name.clone(), p.shape.clone(), p.role, v.clone());
    }
    out
}

fn store_values(store: &ParamStore) -> Vec<Vec<f64>> {
    store.iter().map(|(_, p)| p.values.clone()).collect()
}

/// One optimizer per parameter store; both share the hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseOptimizer {
    pub backbone: Sgd,
    pub head: Sgd,
}

impl SiameseOptimizer {
    pub fn new(config: &TrainConfig) -> Self {
        let sgd = Sgd::new(config.learning_rate, config.momentum, config.weight_decay);
        Self {
            backbone: sgd.clone(),
            head: sgd,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.backbone.learning_rate = lr;
        self.head.learning_rate = lr;
    }

    pub fn learning_rate(&self) -> f64 {
        self.backbone.learning_rate
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    backbone: BackboneConfig,
    relations: RelationSet,
    epoch: usize,
    validation_accuracy: f64,
    config_fingerprint: String,
    train_config: TrainConfig,
    learning_rate: f64,
}

/// Full training state of a relation model at the end of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SiameseModel,
    pub optimizer: SiameseOptimizer,
    pub epoch: usize,
    pub validation_accuracy: f64,
    pub config_fingerprint: String,
    pub train_config: TrainConfig,
}

const CHECKPOINT_KIND: &str = "relation_checkpoint";
const BACKBONE_KIND: &str = "backbone";

impl Checkpoint {
    pub fn to_archive(&self) -> TensorArchive {
        let meta = CheckpointMeta {
            backbone: self.model.backbone.config().clone(),
            relations: self.model.relations().clone(),
            epoch: self.epoch,
            validation_accuracy: self.validation_accuracy,
            config_fingerprint: self.config_fingerprint.clone(),
            train_config: self.train_config.clone(),
            learning_rate: self.optimizer.learning_rate(),
        };
        let mut archive = TensorArchive::new(CHECKPOINT_KIND, serde_json::to_value(meta).expect("serializable meta"))
            .with_store("backbone", self.model.backbone.params.clone())
            .with_store("head", self.model.head_params.clone());
        // Momentum buffers exist only after the first step.
        if !self.optimizer.backbone.velocity().is_empty() {
            archive = archive
                .with_store(
                    "backbone_velocity",
                    store_like(&self.model.backbone.params, self.optimizer.backbone.velocity()),
                )
                .with_store(
                    "head_velocity",
                    store_like(&self.model.head_params, self.optimizer.head.velocity()),
                );
        }
        archive
    }

    pub fn from_archive(archive: TensorArchive) -> Result<Self> {
        let mut archive = archive.expect_kind(CHECKPOINT_KIND)?;
        let meta: CheckpointMeta = archive.meta_as()?;
        let mut backbone = Backbone::new(meta.backbone.clone(), &mut crate::seed::rng(0))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        backbone
            .load_params(archive.take_store("backbone")?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let model = SiameseModel::from_parts(backbone, meta.relations, archive.take_store("head")?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut optimizer = SiameseOptimizer::new(&meta.train_config);
        optimizer.set_learning_rate(meta.learning_rate);
        if let (Some(bv), Some(hv)) = (archive.store("backbone_velocity"), archive.store("head_velocity")) {
            if !bv.same_layout(&model.backbone.params) || !hv.same_layout(&model.head_params) {
                return Err(Error::Checkpoint("optimizer state does not match the model".into()));
            }
            optimizer.backbone.set_velocity(store_values(bv));
            optimizer.head.set_velocity(store_values(hv));
        }
        Ok(Self {
            model,
            optimizer,
            epoch: meta.epoch,
            validation_accuracy: meta.validation_accuracy,
            config_fingerprint: meta.config_fingerprint,
            train_config: meta.train_config,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(TensorArchive::read(path)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackboneMeta {
    config: BackboneConfig,
    source_fingerprint: String,
}

/// A standalone feature extractor: one stack, no relation head.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneExport {
    pub backbone: Backbone,
    /// Fingerprint of the configuration that trained these parameters.
    pub source_fingerprint: String,
}

impl BackboneExport {
    pub fn to_archive(&self) -> TensorArchive {
        let meta = BackboneMeta {
            config: self.backbone.config().clone(),
            source_fingerprint: self.source_fingerprint.clone(),
        };
        TensorArchive::new(BACKBONE_KIND, serde_json::to_value(meta).expect("serializable meta"))
            .with_store("backbone", self.backbone.params.clone())
    }

    pub fn from_archive(archive: TensorArchive) -> Result<Self> {
        let mut archive = archive.expect_kind(BACKBONE_KIND)?;
        let meta: BackboneMeta = archive.meta_as()?;
        let mut backbone =
            Backbone::new(meta.config, &mut crate::seed::rng(0)).map_err(|e| Error::Checkpoint(e.to_string()))?;
        backbone
            .load_params(archive.take_store("backbone")?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            backbone,
            source_fingerprint: meta.source_fingerprint,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(TensorArchive::read(path)?)
    }

    /// Accepts either a backbone export or a full relation checkpoint.
    pub fn read_any(path: impl AsRef<Path>) -> Result<Self> {
        let archive = TensorArchive::read(path)?;
        if archive.kind == CHECKPOINT_KIND {
            Ok(export_single_stack(&Checkpoint::from_archive(archive)?))
        } else {
            Self::from_archive(archive)
        }
    }
}

/// The shared backbone of a relation checkpoint, without its head.
pub fn export_single_stack(checkpoint: &Checkpoint) -> BackboneExport {
    BackboneExport {
        backbone: checkpoint.model.backbone.clone(),
        source_fingerprint: checkpoint.config_fingerprint.clone(),
    }
}
