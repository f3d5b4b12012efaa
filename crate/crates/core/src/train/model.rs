use rand::Rng;

use super::loss::{batch_softmax_cross_entropy, BatchLoss};
use crate::backbone::{Backbone, BackboneConfig};
use crate::error::{input_err, Result};
use crate::nn::{Grads, Linear, Matrix, NormMode, ParamStore, StatUpdate, Tensor5};
use crate::relations::{RelationCategory, RelationSet};

/// Two evaluation stacks over one backbone, followed by a linear relation
/// classifier on `[features(a) | features(b)]`.
///
/// There is exactly one backbone parameter store; "stack 1" and "stack 2" are
/// two evaluations of it, so they cannot drift apart.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseModel {
    pub backbone: Backbone,
    pub head_params: ParamStore,
    head: Linear,
    relations: RelationSet,
}

/// Training-mode pass over a batch of pairs.
pub struct PairForward {
    pub logits: Matrix,
    pub features_a: Matrix,
    pub features_b: Matrix,
    concat: Matrix,
    tape: crate::backbone::ForwardTape,
    pub stat_updates: Vec<StatUpdate>,
}

/// Gradients and statistics of one batch, not yet applied.
pub struct PairGradients {
    pub loss: BatchLoss,
    pub backbone: Grads,
    pub head: Grads,
    pub stat_updates: Vec<StatUpdate>,
}

impl SiameseModel {
    pub fn new<R: Rng>(config: BackboneConfig, relations: RelationSet, rng: &mut R) -> Result<Self> {
        let backbone = Backbone::new(config, rng)?;
        Ok(Self::with_backbone(backbone, relations, rng))
    }

    pub fn with_backbone<R: Rng>(backbone: Backbone, relations: RelationSet, rng: &mut R) -> Self {
        let mut head_params = ParamStore::new();
        let head = Linear::new(
            &mut head_params,
            "head",
            2 * backbone.feature_dim(),
            relations.len(),
            rng,
        );
        Self {
            backbone,
            head_params,
            head,
            relations,
        }
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(backbone: Backbone, relations: RelationSet, head_params: ParamStore) -> Result<Self> {
        let mut rng = crate::seed::rng(0);
        let mut model = Self::with_backbone(backbone, relations, &mut rng);
        if !model.head_params.same_layout(&head_params) {
            return Err(input_err!(
                "head parameters do not match {} relations",
                model.relations.len()
            ));
        }
        model.head_params = head_params;
        Ok(model)
    }

    pub fn relations(&self) -> &RelationSet {
        &self.relations
    }

    /// Number of active relations `c`.
    pub fn classes(&self) -> usize {
        self.relations.len()
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn class_index(&self, category: RelationCategory) -> Result<usize> {
        self.relations
            .class_index(category)
            .ok_or_else(|| input_err!("relation {category} is not active in this model"))
    }

    /// Inference features of one stack, `B x feature_dim`.
    pub fn stack_features(&self, x: &Tensor5) -> Result<Matrix> {
        self.backbone.features(x)
    }

    fn check_pair(&self, a: &Tensor5, b: &Tensor5) -> Result<()> {
        self.backbone.check_input(a)?;
        self.backbone.check_input(b)?;
        if a.batch() != b.batch() {
            return Err(input_err!("pair batch sizes differ: {} vs {}", a.batch(), b.batch()));
        }
        Ok(())
    }

    /// Both clips go through the backbone in one batch `[a; b]`, so in
    /// training mode they share normalization statistics as well as weights.
    pub fn forward_pair_mode(&self, a: &Tensor5, b: &Tensor5, mode: NormMode) -> Result<PairForward> {
        self.check_pair(a, b)?;
        let n = a.batch();
        let fwd = self.backbone.forward(&Tensor5::concat(&[a, b]), mode)?;
        let (features_a, features_b) = fwd.features.vsplit(n);
        let concat = features_a.hconcat(&features_b);
        let logits = self.head.forward(&self.head_params, &concat);
        if logits.data().iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Numeric("non-finite logits".into()));
        }
        Ok(PairForward {
            logits,
            features_a,
            features_b,
            concat,
            tape: fwd.tape,
            stat_updates: fwd.stat_updates,
        })
    }

    /// Inference logits, `B x c`.
    pub fn forward_pair(&self, a: &Tensor5, b: &Tensor5) -> Result<Matrix> {
        Ok(self.forward_pair_mode(a, b, NormMode::Frozen)?.logits)
    }

    /// Loss and parameter gradients for one batch; `labels` are class indices.
    pub fn gradients(&self, a: &Tensor5, b: &Tensor5, labels: &[usize], mode: NormMode) -> Result<PairGradients> {
        let fwd = self.forward_pair_mode(a, b, mode)?;
        let loss = batch_softmax_cross_entropy(&fwd.logits, labels)?;
        let mut head = self.head_params.zero_grads();
        let dconcat = self
            .head
            .backward(&self.head_params, &fwd.concat, &loss.dlogits, &mut head);
        let (da, db) = dconcat.hsplit(self.backbone.feature_dim());
        let mut backbone = self.backbone.params.zero_grads();
        self.backbone.backward(&fwd.tape, &da.vconcat(&db), &mut backbone);
        Ok(PairGradients {
            loss,
            backbone,
            head,
            stat_updates: fwd.stat_updates,
        })
    }
}
