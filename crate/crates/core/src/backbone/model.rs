use rand::Rng;

use super::config::{BackboneConfig, BackboneKind};
use crate::error::{input_err, Result};
use crate::nn::{
    avg_pool, global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm3d, Conv3d, Grads, Matrix,
    NormCache, NormMode, ParamStore, StatUpdate, Tensor5,
};

/// A 3x3x3 convolution, or its spatial/temporal factorization.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvUnit {
    Full(Conv3d),
    Factored {
        spatial: Conv3d,
        norm: BatchNorm3d,
        temporal: Conv3d,
    },
}

enum UnitTape {
    Full {
        input: Tensor5,
    },
    Factored {
        input: Tensor5,
        norm: NormCache,
        mid: Tensor5,
    },
}

/// Channel count of the intermediate (2+1)D activation, chosen so the
/// factored pair has about as many weights as the 3x3x3 kernel it replaces.
pub fn factored_mid_channels(cin: usize, cout: usize) -> usize {
    ((cin * cout * 27) / (cin * 9 + 3 * cout)).max(1)
}

impl ConvUnit {
    fn new<R: Rng>(
        kind: BackboneKind,
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        stride: [usize; 3],
        rng: &mut R,
    ) -> Self {
        match kind {
            BackboneKind::C3d | BackboneKind::R3d => {
                ConvUnit::Full(Conv3d::new(store, name, cin, cout, [3, 3, 3], stride, rng))
            }
            BackboneKind::R2plus1d => {
                let mid = factored_mid_channels(cin, cout);
                let spatial = Conv3d::new(
                    store,
                    &format!("{name}.spatial"),
                    cin,
                    mid,
                    [1, 3, 3],
                    [1, stride[1], stride[2]],
                    rng,
                );
                let norm = BatchNorm3d::new(store, &format!("{name}.mid_norm"), mid);
                let temporal = Conv3d::new(
                    store,
                    &format!("{name}.temporal"),
                    mid,
                    cout,
                    [3, 1, 1],
                    [stride[0], 1, 1],
                    rng,
                );
                ConvUnit::Factored {
                    spatial,
                    norm,
                    temporal,
                }
            }
        }
    }

    pub fn convs(&self) -> Vec<&Conv3d> {
        match self {
            ConvUnit::Full(c) => vec![c],
            ConvUnit::Factored { spatial, temporal, .. } => vec![spatial, temporal],
        }
    }

    fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor5,
        mode: NormMode,
        updates: &mut Vec<StatUpdate>,
    ) -> (Tensor5, UnitTape) {
        match self {
            ConvUnit::Full(conv) => (conv.forward(store, x), UnitTape::Full { input: x.clone() }),
            ConvUnit::Factored {
                spatial,
                norm,
                temporal,
            } => {
                let s = spatial.forward(store, x);
                let (n, cache, upd) = norm.forward(store, &s, mode);
                updates.extend(upd);
                let mid = relu(&n);
                let y = temporal.forward(store, &mid);
                (
                    y,
                    UnitTape::Factored {
                        input: x.clone(),
                        norm: cache,
                        mid,
                    },
                )
            }
        }
    }

    fn backward(
        &self,
        store: &ParamStore,
        tape: &UnitTape,
        dy: &Tensor5,
        grads: &mut Grads,
        need_input_grad: bool,
    ) -> Option<Tensor5> {
        match (self, tape) {
            (ConvUnit::Full(conv), UnitTape::Full { input }) => conv.backward(store, input, dy, grads, need_input_grad),
            (
                ConvUnit::Factored {
                    spatial,
                    norm,
                    temporal,
                },
                UnitTape::Factored {
                    input,
                    norm: cache,
                    mid,
                },
            ) => {
                let dmid = temporal
                    .backward(store, mid, dy, grads, true)
                    .expect("requested input grad");
                let dn = relu_backward(mid, &dmid);
                let ds = norm.backward(store, cache, &dn, grads);
                spatial.backward(store, input, &ds, grads, need_input_grad)
            }
            _ => unreachable!("tape does not match unit"),
        }
    }
}

/// One of the five stages.
#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    /// conv -> norm -> ReLU
    Plain { conv: ConvUnit, norm: BatchNorm3d },
    /// relu(norm2(conv2(relu(norm1(conv1(x))))) + skip(x))
    Residual {
        conv1: ConvUnit,
        norm1: BatchNorm3d,
        conv2: ConvUnit,
        norm2: BatchNorm3d,
        /// 1x1x1 projection, present when the stage changes shape.
        projection: Option<(Conv3d, BatchNorm3d)>,
    },
}

enum StageTape {
    Plain {
        unit: UnitTape,
        norm: NormCache,
        out: Tensor5,
    },
    Residual {
        unit1: UnitTape,
        norm1: NormCache,
        act1: Tensor5,
        unit2: UnitTape,
        norm2: NormCache,
        projection: Option<(Tensor5, NormCache)>,
        out: Tensor5,
    },
}

impl Stage {
    pub fn units(&self) -> Vec<&ConvUnit> {
        match self {
            Stage::Plain { conv, .. } => vec![conv],
            Stage::Residual { conv1, conv2, .. } => vec![conv1, conv2],
        }
    }

    pub fn projection(&self) -> Option<&Conv3d> {
        match self {
            Stage::Residual {
                projection: Some((p, _)),
                ..
            } => Some(p),
            _ => None,
        }
    }

    pub fn is_residual(&self) -> bool {
        matches!(self, Stage::Residual { .. })
    }

    fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor5,
        mode: NormMode,
        updates: &mut Vec<StatUpdate>,
    ) -> (Tensor5, StageTape) {
        match self {
            Stage::Plain { conv, norm } => {
                let (c, unit) = conv.forward(store, x, mode, updates);
                let (n, cache, upd) = norm.forward(store, &c, mode);
                updates.extend(upd);
                let out = relu(&n);
                (out.clone(), StageTape::Plain { unit, norm: cache, out })
            }
            Stage::Residual {
                conv1,
                norm1,
                conv2,
                norm2,
                projection,
            } => {
                let (c1, unit1) = conv1.forward(store, x, mode, updates);
                let (n1, cache1, upd) = norm1.forward(store, &c1, mode);
                updates.extend(upd);
                let act1 = relu(&n1);
                let (c2, unit2) = conv2.forward(store, &act1, mode, updates);
                let (mut sum, cache2, upd) = norm2.forward(store, &c2, mode);
                updates.extend(upd);
                let proj_tape = match projection {
                    Some((pconv, pnorm)) => {
                        let p = pconv.forward(store, x);
                        let (pn, pcache, upd) = pnorm.forward(store, &p, mode);
                        updates.extend(upd);
                        sum.add_assign(&pn);
                        Some((x.clone(), pcache))
                    }
                    None => {
                        sum.add_assign(x);
                        None
                    }
                };
                let out = relu(&sum);
                (
                    out.clone(),
                    StageTape::Residual {
                        unit1,
                        norm1: cache1,
                        act1,
                        unit2,
                        norm2: cache2,
                        projection: proj_tape,
                        out,
                    },
                )
            }
        }
    }

    fn backward(
        &self,
        store: &ParamStore,
        tape: &StageTape,
        dy: &Tensor5,
        grads: &mut Grads,
        need_input_grad: bool,
    ) -> Option<Tensor5> {
        match (self, tape) {
            (Stage::Plain { conv, norm }, StageTape::Plain { unit, norm: cache, out }) => {
                let dn = relu_backward(out, dy);
                let dc = norm.backward(store, cache, &dn, grads);
                conv.backward(store, unit, &dc, grads, need_input_grad)
            }
            (
                Stage::Residual {
                    conv1,
                    norm1,
                    conv2,
                    norm2,
                    projection,
                },
                StageTape::Residual {
                    unit1,
                    norm1: cache1,
                    act1,
                    unit2,
                    norm2: cache2,
                    projection: proj_tape,
                    out,
                },
            ) => {
                let dsum = relu_backward(out, dy);
                let dc2 = norm2.backward(store, cache2, &dsum, grads);
                let dact1 = conv2
                    .backward(store, unit2, &dc2, grads, true)
                    .expect("requested input grad");
                let dn1 = relu_backward(act1, &dact1);
                let dc1 = norm1.backward(store, cache1, &dn1, grads);
                let dx_main = conv1.backward(store, unit1, &dc1, grads, need_input_grad);
                let dx_skip = match (projection, proj_tape) {
                    (Some((pconv, pnorm)), Some((pin, pcache))) => {
                        let dp = pnorm.backward(store, pcache, &dsum, grads);
                        pconv.backward(store, pin, &dp, grads, need_input_grad)
                    }
                    (None, None) => need_input_grad.then(|| dsum.clone()),
                    _ => unreachable!("projection tape mismatch"),
                };
                match (dx_main, dx_skip) {
                    (Some(mut a), Some(b)) => {
                        a.add_assign(&b);
                        Some(a)
                    }
                    _ => None,
                }
            }
            _ => unreachable!("tape does not match stage"),
        }
    }
}

/// Saved forward state for [`Backbone::backward`]. One tape per evaluation,
/// so the same parameters can be run several times before a single update.
pub struct ForwardTape {
    stages: Vec<StageTape>,
    final_dims: [usize; 5],
}

impl ForwardTape {
    /// Bit-packed on/off state of every ReLU evaluated in this pass. Two passes
    /// with equal signatures lie on the same linear piece of the network.
    pub fn relu_signature(&self) -> Vec<u64> {
        let mut bits = Vec::new();
        let mut push = |t: &Tensor5| {
            for chunk in t.data().chunks(64) {
                let mut word = 0u64;
                for (i, v) in chunk.iter().enumerate() {
                    if *v > 0.0 {
                        word |= 1 << i;
                    }
                }
                bits.push(word);
            }
        };
        for st in &self.stages {
            match st {
                StageTape::Plain { unit, out, .. } => {
                    if let UnitTape::Factored { mid, .. } = unit {
                        push(mid);
                    }
                    push(out);
                }
                StageTape::Residual {
                    unit1,
                    act1,
                    unit2,
                    out,
                    ..
                } => {
                    for u in [unit1, unit2] {
                        if let UnitTape::Factored { mid, .. } = u {
                            push(mid);
                        }
                    }
                    push(act1);
                    push(out);
                }
            }
        }
        bits
    }

    /// Output activation of stage `index` (0-based), `[B, C, T, H, W]`.
    pub fn stage_output(&self, index: usize) -> &Tensor5 {
        match &self.stages[index] {
            StageTape::Plain { out, .. } | StageTape::Residual { out, .. } => out,
        }
    }
}

/// Result of one forward pass.
pub struct Forward {
    /// `B x feature_dim` globally pooled features.
    pub features: Matrix,
    pub tape: ForwardTape,
    /// Pending running-statistic updates (empty in frozen mode).
    pub stat_updates: Vec<StatUpdate>,
}

/// A parameterized feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    config: BackboneConfig,
    stages: Vec<Stage>,
    pub params: ParamStore,
}

impl Backbone {
    pub fn new<R: Rng>(config: BackboneConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut stages = Vec::with_capacity(5);
        let mut cin = config.input_shape[0];
        for (i, (&cout, &stride)) in config.block_widths.iter().zip(&config.strides).enumerate() {
            let name = format!("stage{}", i + 1);
            let stage = match config.kind {
                BackboneKind::C3d => {
                    let conv = ConvUnit::new(
                        config.kind,
                        &mut params,
                        &format!("{name}.conv"),
                        cin,
                        cout,
                        stride,
                        rng,
                    );
                    let norm = BatchNorm3d::new(&mut params, &format!("{name}.norm"), cout);
                    Stage::Plain { conv, norm }
                }
                BackboneKind::R3d | BackboneKind::R2plus1d => {
                    let conv1 = ConvUnit::new(
                        config.kind,
                        &mut params,
                        &format!("{name}.conv1"),
                        cin,
                        cout,
                        stride,
                        rng,
                    );
                    let norm1 = BatchNorm3d::new(&mut params, &format!("{name}.norm1"), cout);
                    let conv2 = ConvUnit::new(
                        config.kind,
                        &mut params,
                        &format!("{name}.conv2"),
                        cout,
                        cout,
                        [1, 1, 1],
                        rng,
                    );
                    let norm2 = BatchNorm3d::new(&mut params, &format!("{name}.norm2"), cout);
                    let projection = (cin != cout || stride != [1, 1, 1]).then(|| {
                        let conv = Conv3d::new(&mut params, &format!("{name}.proj"), cin, cout, [1, 1, 1], stride, rng);
                        let norm = BatchNorm3d::new(&mut params, &format!("{name}.proj_norm"), cout);
                        (conv, norm)
                    });
                    Stage::Residual {
                        conv1,
                        norm1,
                        conv2,
                        norm2,
                        projection,
                    }
                }
            };
            stages.push(stage);
            cin = cout;
        }
        Ok(Self { config, stages, params })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    /// Replaces all parameters; the layout must match this architecture.
    pub fn load_params(&mut self, params: ParamStore) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(input_err!("parameter layout does not match backbone architecture"));
        }
        self.params = params;
        Ok(())
    }

    pub fn check_input(&self, x: &Tensor5) -> Result<()> {
        let d = x.dims();
        let expected = self.config.input_shape;
        if d[1..] != expected[..] || d[0] == 0 {
            return Err(input_err!(
                "clip batch shape mismatch: expected [B>0, {}, {}, {}, {}], got {:?}",
                expected[0],
                expected[1],
                expected[2],
                expected[3],
                d
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor5, mode: NormMode) -> Result<Forward> {
        self.check_input(x)?;
        let mut updates = Vec::new();
        let mut tapes = Vec::with_capacity(self.stages.len());
        let mut h = avg_pool(x, self.config.input_pool);
        for stage in &self.stages {
            let (out, tape) = stage.forward(&self.params, &h, mode, &mut updates);
            tapes.push(tape);
            h = out;
        }
        let final_dims = h.dims();
        Ok(Forward {
            features: global_avg_pool(&h),
            tape: ForwardTape {
                stages: tapes,
                final_dims,
            },
            stat_updates: updates,
        })
    }

    /// Inference-mode features, `B x feature_dim`.
    pub fn features(&self, x: &Tensor5) -> Result<Matrix> {
        Ok(self.forward(x, NormMode::Frozen)?.features)
    }

    /// Accumulates parameter gradients for a loss whose gradient with respect
    /// to the pooled features is `dfeatures`.
    pub fn backward(&self, tape: &ForwardTape, dfeatures: &Matrix, grads: &mut Grads) {
        let mut dy = global_avg_pool_backward(tape.final_dims, dfeatures);
        for (i, (stage, st)) in self.stages.iter().zip(&tape.stages).enumerate().rev() {
            match stage.backward(&self.params, st, &dy, grads, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate]) {
        for u in updates {
            u.apply(&mut self.params);
        }
    }
}
