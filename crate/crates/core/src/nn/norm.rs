use super::params::{Grads, ParamId, ParamRole, ParamStore};
use super::tensor::Tensor5;

/// How normalization layers obtain their statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Per-channel batch statistics; running statistics are updated afterwards.
    Train,
    /// Running statistics only. Makes the forward map a fixed function of the
    /// input, which inference and finite-difference checks rely on.
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm3d {
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

/// Saved forward state for [`BatchNorm3d::backward`].
#[derive(Clone, Debug)]
pub struct NormCache {
    normalized: Tensor5,
    inv_std: Vec<f64>,
    mode: NormMode,
}

/// Batch statistics to fold into the running averages once a step completes.
#[derive(Clone, Debug, PartialEq)]
pub struct StatUpdate {
    running_mean: ParamId,
    running_var: ParamId,
    momentum: f64,
    mean: Vec<f64>,
    unbiased_var: Vec<f64>,
}

impl StatUpdate {
    pub fn apply(&self, store: &mut ParamStore) {
        let m = self.momentum;
        for (r, v) in store.get_mut(self.running_mean).iter_mut().zip(&self.mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, v) in store.get_mut(self.running_var).iter_mut().zip(&self.unbiased_var) {
            *r = (1.0 - m) * *r + m * v;
        }
    }
}

impl BatchNorm3d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let scale = store.add(
            format!("{name}.scale"),
            vec![channels],
            ParamRole::NormScale,
            vec![1.0; channels],
        );
        let shift = store.add(
            format!("{name}.shift"),
            vec![channels],
            ParamRole::NormShift,
            vec![0.0; channels],
        );
        let running_mean = store.add(
            format!("{name}.running_mean"),
            vec![channels],
            ParamRole::RunningMean,
            vec![0.0; channels],
        );
        let running_var = store.add(
            format!("{name}.running_var"),
            vec![channels],
            ParamRole::RunningVar,
            vec![1.0; channels],
        );
        Self {
            scale,
            shift,
            running_mean,
            running_var,
            channels,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor5, mode: NormMode) -> (Tensor5, NormCache, Option<StatUpdate>) {
        assert_eq!(x.channels(), self.channels, "norm channels");
        let spatial: usize = x.volume().iter().product();
        let count = (x.batch() * spatial) as f64;
        let c = self.channels;

        let (mean, var, update) = match mode {
            NormMode::Frozen => (
                store.get(self.running_mean).to_vec(),
                store.get(self.running_var).to_vec(),
                None,
            ),
            NormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for b in 0..x.batch() {
                    let s = x.sample(b);
                    for ch in 0..c {
                        mean[ch] += s[ch * spatial..(ch + 1) * spatial].iter().sum::<f64>();
                    }
                }
                for m in &mut mean {
                    *m /= count;
                }
                for b in 0..x.batch() {
                    let s = x.sample(b);
                    for ch in 0..c {
                        var[ch] += s[ch * spatial..(ch + 1) * spatial]
                            .iter()
                            .map(|v| (v - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                }
                for v in &mut var {
                    *v /= count;
                }
                let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                let update = StatUpdate {
                    running_mean: self.running_mean,
                    running_var: self.running_var,
                    momentum: self.momentum,
                    mean: mean.clone(),
                    unbiased_var: var.iter().map(|v| v * correction).collect(),
                };
                (mean, var, Some(update))
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let gamma = store.get(self.scale);
        let beta = store.get(self.shift);
        let mut normalized = x.clone();
        let mut y = x.clone();
        for b in 0..x.batch() {
            let n = normalized.sample_mut(b);
            for ch in 0..c {
                for v in &mut n[ch * spatial..(ch + 1) * spatial] {
                    *v = (*v - mean[ch]) * inv_std[ch];
                }
            }
            let n = normalized.sample(b).to_vec();
            let out = y.sample_mut(b);
            for ch in 0..c {
                for (o, v) in out[ch * spatial..(ch + 1) * spatial]
                    .iter_mut()
                    .zip(&n[ch * spatial..(ch + 1) * spatial])
                {
                    *o = gamma[ch] * v + beta[ch];
                }
            }
        }
        (
            y,
            NormCache {
                normalized,
                inv_std,
                mode,
            },
            update,
        )
    }

    pub fn backward(&self, store: &ParamStore, cache: &NormCache, dy: &Tensor5, grads: &mut Grads) -> Tensor5 {
        let c = self.channels;
        let spatial: usize = dy.volume().iter().product();
        let count = (dy.batch() * spatial) as f64;
        let gamma = store.get(self.scale).to_vec();

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for b in 0..dy.batch() {
            let g = dy.sample(b);
            let n = cache.normalized.sample(b);
            for ch in 0..c {
                let r = ch * spatial..(ch + 1) * spatial;
                dbeta[ch] += g[r.clone()].iter().sum::<f64>();
                dgamma[ch] += g[r.clone()].iter().zip(&n[r]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for (a, b) in grads.get_mut(self.scale).iter_mut().zip(&dgamma) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.shift).iter_mut().zip(&dbeta) {
            *a += b;
        }

        let mut dx = dy.clone();
        for b in 0..dy.batch() {
            let n = cache.normalized.sample(b).to_vec();
            let out = dx.sample_mut(b);
            for ch in 0..c {
                let k = gamma[ch] * cache.inv_std[ch];
                let r = ch * spatial..(ch + 1) * spatial;
                match cache.mode {
                    NormMode::Frozen => {
                        for v in &mut out[r] {
                            *v *= k;
                        }
                    }
                    NormMode::Train => {
                        let mean_dy = dbeta[ch] / count;
                        let mean_dy_n = dgamma[ch] / count;
                        for (v, nv) in out[r.clone()].iter_mut().zip(&n[r]) {
                            *v = k * (*v - mean_dy - nv * mean_dy_n);
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(x: &Tensor5) -> Tensor5 {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its *output*.
pub fn relu_backward(output: &Tensor5, dy: &Tensor5) -> Tensor5 {
    let mut dx = dy.clone();
    for (g, &o) in dx.data_mut().iter_mut().zip(output.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}
