use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

/// Momentum SGD with decoupled-from-loss L2 weight decay:
/// `v <- mu * v + (g + wd * w)`, `w <- w - lr * v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Momentum buffers, one per store block; empty before the first step.
    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, velocity: Vec<Vec<f64>>) {
        self.velocity = velocity;
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        if self.velocity.is_empty() {
            self.velocity = store.iter().map(|(_, p)| vec![0.0; p.values.len()]).collect();
        }
        assert_eq!(self.velocity.len(), store.len(), "optimizer bound to another store");
        let (lr, mu, wd) = (self.learning_rate, self.momentum, self.weight_decay);
        for ((id, param), vel) in store.iter_mut().zip(&mut self.velocity) {
            if !param.role.trainable() {
                continue;
            }
            for ((w, v), g) in param.values.iter_mut().zip(vel.iter_mut()).zip(grads.get(id)) {
                *v = mu * *v + g + wd * *w;
                *w -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamRole;

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add("w", vec![3], ParamRole::Weight, vec![1.0, -2.0, 0.5]);
        let mut grads = store.zero_grads();
        grads.get_mut(id).copy_from_slice(&[0.3, 0.1, -4.0]);
        let mut sgd = Sgd::new(0.0, 0.9, 5e-4);
        for _ in 0..5 {
            sgd.step(&mut store, &grads);
        }
        assert_eq!(store.get(id), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut store = ParamStore::new();
        let id = store.add("w", vec![1], ParamRole::Weight, vec![0.0]);
        let mut grads = store.zero_grads();
        grads.get_mut(id)[0] = 1.0;
        let mut sgd = Sgd::new(0.1, 0.5, 0.0);
        sgd.step(&mut store, &grads);
        assert!((store.get(id)[0] + 0.1).abs() < 1e-15);
        sgd.step(&mut store, &grads);
        // v = 0.5 * 1 + 1 = 1.5
        assert!((store.get(id)[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn running_stats_untouched() {
        let mut store = ParamStore::new();
        let id = store.add("rm", vec![1], ParamRole::RunningMean, vec![2.0]);
        let mut grads = store.zero_grads();
        grads.get_mut(id)[0] = 1.0;
        Sgd::new(1.0, 0.0, 1.0).step(&mut store, &grads);
        assert_eq!(store.get(id), &[2.0]);
    }
}
