use rand::Rng;

use super::params::{Grads, ParamId, ParamRole, ParamStore};
use super::tensor::Matrix;

/// Affine map `y = W x + b` with `W` stored as `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let w: Vec<f64> = (0..in_features * out_features)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b: Vec<f64> = (0..out_features).map(|_| rng.gen_range(-bound..bound)).collect();
        let weight = store.add(
            format!("{name}.weight"),
            vec![out_features, in_features],
            ParamRole::Weight,
            w,
        );
        let bias = store.add(format!("{name}.bias"), vec![out_features], ParamRole::Bias, b);
        Self {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_features, "linear input width");
        let w = store.get(self.weight);
        let b = store.get(self.bias);
        let mut y = Matrix::zeros(x.rows(), self.out_features);
        for r in 0..x.rows() {
            let xr = x.row(r);
            for (o, out) in y.row_mut(r).iter_mut().enumerate() {
                let wr = &w[o * self.in_features..(o + 1) * self.in_features];
                *out = b[o] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        y
    }

    pub fn backward(&self, store: &ParamStore, x: &Matrix, dy: &Matrix, grads: &mut Grads) -> Matrix {
        let w = store.get(self.weight).to_vec();
        let n_in = self.in_features;
        {
            let gw = grads.get_mut(self.weight);
            for r in 0..x.rows() {
                for (o, g) in dy.row(r).iter().enumerate() {
                    for (slot, xv) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x.row(r)) {
                        *slot += g * xv;
                    }
                }
            }
        }
        {
            let gb = grads.get_mut(self.bias);
            for r in 0..dy.rows() {
                for (slot, g) in gb.iter_mut().zip(dy.row(r)) {
                    *slot += g;
                }
            }
        }
        let mut dx = Matrix::zeros(x.rows(), n_in);
        for r in 0..x.rows() {
            let dxr = dx.row_mut(r);
            for (o, g) in dy.row(r).iter().enumerate() {
                for (slot, wv) in dxr.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *slot += g * wv;
                }
            }
        }
        dx
    }
}
