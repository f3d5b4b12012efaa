//! Finite-difference verification of the analytic backbone gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Backbone;
use crate::error::Result;
use crate::nn::{Linear, Matrix, NormMode, ParamId, ParamStore, Tensor5};
use crate::train::loss::batch_softmax_cross_entropy;

/// Linear classifier + softmax cross-entropy on top of pooled features; the
/// scalar objective whose parameter gradients are checked.
pub struct LossHead {
    pub store: ParamStore,
    pub linear: Linear,
}

impl LossHead {
    pub fn new<R: Rng>(feature_dim: usize, classes: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let linear = Linear::new(&mut store, "probe_head", feature_dim, classes, rng);
        Self { store, linear }
    }

    fn loss(&self, features: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
        let logits = self.linear.forward(&self.store, features);
        let out = batch_softmax_cross_entropy(&logits, labels)?;
        let mut scratch = self.store.zero_grads();
        let dfeatures = self.linear.backward(&self.store, features, &out.dlogits, &mut scratch);
        Ok((out.loss, dfeatures))
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub num_params: usize,
    pub step: f64,
    /// Denominator floor of the relative error, so that parameters with a
    /// vanishing gradient are compared absolutely.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            num_params: 50,
            step: 1e-5,
            denominator_floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckedParam {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: Vec<CheckedParam>,
    /// Draws rejected because a ReLU switched state inside `[w - h, w + h]`,
    /// where the central difference does not estimate the derivative.
    pub kink_rejections: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central differences on randomly chosen
/// trainable scalars. Normalization runs on frozen statistics throughout.
pub fn numeric_gradient_check(
    model: &Backbone,
    head: &LossHead,
    probe: &Tensor5,
    labels: &[usize],
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let fwd = model.forward(probe, NormMode::Frozen)?;
    let (_, dfeatures) = head.loss(&fwd.features, labels)?;
    let mut grads = model.params.zero_grads();
    model.backward(&fwd.tape, &dfeatures, &mut grads);

    // Flat index over every trainable scalar.
    let slots: Vec<(ParamId, usize)> = model
        .params
        .iter()
        .filter(|(_, p)| p.role.trainable())
        .flat_map(|(id, p)| (0..p.values.len()).map(move |i| (id, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    // Random order over all slots; walk it until enough valid checks exist.
    let wanted = options.num_params.min(slots.len());
    let order = sample(&mut rng, slots.len(), slots.len());
    let base_signature = fwd.tape.relu_signature();

    let mut probe_model = model.clone();
    let eval = |m: &Backbone| -> Result<(f64, Vec<u64>)> {
        let f = m.forward(probe, NormMode::Frozen)?;
        Ok((head.loss(&f.features, labels)?.0, f.tape.relu_signature()))
    };

    let mut checked = Vec::with_capacity(wanted);
    let mut kink_rejections = 0;
    let mut max_err: f64 = 0.0;
    for pick in order.into_iter() {
        if checked.len() == wanted {
            break;
        }
        let (id, idx) = slots[pick];
        let original = probe_model.params.get(id)[idx];
        probe_model.params.get_mut(id)[idx] = original + options.step;
        let (plus, sig_plus) = eval(&probe_model)?;
        probe_model.params.get_mut(id)[idx] = original - options.step;
        let (minus, sig_minus) = eval(&probe_model)?;
        probe_model.params.get_mut(id)[idx] = original;
        if sig_plus != base_signature || sig_minus != base_signature {
            kink_rejections += 1;
            continue;
        }

        let numeric = (plus - minus) / (2.0 * options.step);
        let analytic = grads.get(id)[idx];
        let err = relative_error(analytic, numeric, options.denominator_floor);
        max_err = max_err.max(err);
        checked.push(CheckedParam {
            name: model.params.param(id).name.clone(),
            index: idx,
            analytic,
            numeric,
            relative_error: err,
        });
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        checked,
        kink_rejections,
    })
}
