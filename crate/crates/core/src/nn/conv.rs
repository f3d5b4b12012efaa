use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::params::{Grads, ParamId, ParamRole, ParamStore};
use super::tensor::Tensor5;

/// Output extent of a padded, strided window along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= kernel, "kernel larger than padded input");
    (input + 2 * pad - kernel) / stride + 1
}

/// Bias-free 3D convolution (every convolution here feeds a normalization layer).
///
/// Weight layout is `[out, in, kt, kh, kw]`; padding is `kernel / 2` per axis so
/// stride 1 preserves the volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub weight: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
}

impl Conv3d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel.iter().product::<usize>();
        // He-normal for ReLU networks.
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let n = out_channels * fan_in;
        let values: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        let weight = store.add(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel[0], kernel[1], kernel[2]],
            ParamRole::Weight,
            values,
        );
        Self {
            weight,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn padding(&self) -> [usize; 3] {
        [self.kernel[0] / 2, self.kernel[1] / 2, self.kernel[2] / 2]
    }

    pub fn output_volume(&self, input: [usize; 3]) -> [usize; 3] {
        let pad = self.padding();
        [
            conv_out_len(input[0], self.kernel[0], self.stride[0], pad[0]),
            conv_out_len(input[1], self.kernel[1], self.stride[1], pad[1]),
            conv_out_len(input[2], self.kernel[2], self.stride[2], pad[2]),
        ]
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor5) -> Tensor5 {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let vol_in = x.volume();
        let vol_out = self.output_volume(vol_in);
        let positions: usize = vol_out.iter().product();
        let rows = self.patch_len();
        let w = ArrayView2::from_shape((self.out_channels, rows), store.get(self.weight)).expect("weight shape");

        let mut out = Tensor5::zeros([x.batch(), self.out_channels, vol_out[0], vol_out[1], vol_out[2]]);
        let out_len = out.sample_len();
        out.data_mut()
            .par_chunks_mut(out_len)
            .enumerate()
            .for_each(|(b, out_b)| {
                let cols = self.im2col(x.sample(b), vol_in, vol_out);
                let cols = ArrayView2::from_shape((rows, positions), &cols).expect("cols shape");
                let mut y = ArrayViewMut2::from_shape((self.out_channels, positions), out_b).expect("output shape");
                general_mat_mul(1.0, &w, &cols, 0.0, &mut y);
            });
        out
    }

    /// Accumulates the weight gradient into `grads` and returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor5,
        dy: &Tensor5,
        grads: &mut Grads,
        need_input_grad: bool,
    ) -> Option<Tensor5> {
        let vol_in = x.volume();
        let vol_out = self.output_volume(vol_in);
        assert_eq!(dy.volume(), vol_out);
        let positions: usize = vol_out.iter().product();
        let rows = self.patch_len();
        let w = ArrayView2::from_shape((self.out_channels, rows), store.get(self.weight)).expect("weight shape");

        let per_sample: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..x.batch())
            .into_par_iter()
            .map(|b| {
                let cols_buf = self.im2col(x.sample(b), vol_in, vol_out);
                let cols = ArrayView2::from_shape((rows, positions), &cols_buf).expect("cols shape");
                let g = ArrayView2::from_shape((self.out_channels, positions), dy.sample(b)).expect("dy shape");
                let mut dw = vec![0.0; self.out_channels * rows];
                {
                    let mut dw_view =
                        ArrayViewMut2::from_shape((self.out_channels, rows), &mut dw[..]).expect("dw shape");
                    general_mat_mul(1.0, &g, &cols.t(), 0.0, &mut dw_view);
                }
                let dx = need_input_grad.then(|| {
                    let mut dcols = vec![0.0; rows * positions];
                    {
                        let mut dcols_view =
                            ArrayViewMut2::from_shape((rows, positions), &mut dcols[..]).expect("dcols shape");
                        general_mat_mul(1.0, &w.t(), &g, 0.0, &mut dcols_view);
                    }
                    self.col2im(&dcols, vol_in, vol_out)
                });
                (dw, dx)
            })
            .collect();

        // Reduce in batch order so results do not depend on scheduling.
        let gw = grads.get_mut(self.weight);
        let mut dx_data = need_input_grad.then(|| Vec::with_capacity(x.data().len()));
        for (dw, dx) in per_sample {
            for (a, b) in gw.iter_mut().zip(&dw) {
                *a += b;
            }
            if let (Some(acc), Some(dx)) = (dx_data.as_mut(), dx) {
                acc.extend_from_slice(&dx);
            }
        }
        dx_data.map(|d| Tensor5::from_vec(x.dims(), d))
    }

    fn im2col(&self, x: &[f64], vol_in: [usize; 3], vol_out: [usize; 3]) -> Vec<f64> {
        let [ti, hi, wi] = vol_in;
        let [to, ho, wo] = vol_out;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding();
        let positions = to * ho * wo;
        let mut cols = vec![0.0; self.patch_len() * positions];
        let mut row = 0;
        for c in 0..self.in_channels {
            let xc = &x[c * ti * hi * wi..(c + 1) * ti * hi * wi];
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let dst = &mut cols[row * positions..(row + 1) * positions];
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            if it < 0 || it >= ti as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= hi as isize {
                                    continue;
                                }
                                let src = &xc[(it as usize * hi + ih as usize) * wi..][..wi];
                                let d = &mut dst[(ot * ho + oh) * wo..][..wo];
                                for (ow, slot) in d.iter_mut().enumerate() {
                                    let iw = (ow * sw + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < wi as isize {
                                        *slot = src[iw as usize];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], vol_in: [usize; 3], vol_out: [usize; 3]) -> Vec<f64> {
        let [ti, hi, wi] = vol_in;
        let [to, ho, wo] = vol_out;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding();
        let positions = to * ho * wo;
        let mut x = vec![0.0; self.in_channels * ti * hi * wi];
        let mut row = 0;
        for c in 0..self.in_channels {
            let xc = &mut x[c * ti * hi * wi..(c + 1) * ti * hi * wi];
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let src = &cols[row * positions..(row + 1) * positions];
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            if it < 0 || it >= ti as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= hi as isize {
                                    continue;
                                }
                                let dst = &mut xc[(it as usize * hi + ih as usize) * wi..][..wi];
                                let s = &src[(ot * ho + oh) * wo..][..wo];
                                for (ow, v) in s.iter().enumerate() {
                                    let iw = (ow * sw + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < wi as isize {
                                        dst[iw as usize] += v;
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an independent reference.
    fn naive_conv(conv: &Conv3d, w: &[f64], x: &Tensor5) -> Tensor5 {
        let [ti, hi, wi] = x.volume();
        let vo = conv.output_volume(x.volume());
        let [kt, kh, kw] = conv.kernel;
        let pad = conv.padding();
        let mut out = Tensor5::zeros([x.batch(), conv.out_channels, vo[0], vo[1], vo[2]]);
        let dims = out.dims();
        for b in 0..x.batch() {
            let xs = x.sample(b).to_vec();
            let os = out.sample_mut(b);
            for o in 0..dims[1] {
                for ot in 0..vo[0] {
                    for oh in 0..vo[1] {
                        for ow in 0..vo[2] {
                            let mut acc = 0.0;
                            for c in 0..conv.in_channels {
                                for a in 0..kt {
                                    for bb in 0..kh {
                                        for d in 0..kw {
                                            let it = (ot * conv.stride[0] + a) as isize - pad[0] as isize;
                                            let ih = (oh * conv.stride[1] + bb) as isize - pad[1] as isize;
                                            let iw = (ow * conv.stride[2] + d) as isize - pad[2] as isize;
                                            if it < 0
                                                || ih < 0
                                                || iw < 0
                                                || it >= ti as isize
                                                || ih >= hi as isize
                                                || iw >= wi as isize
                                            {
                                                continue;
                                            }
                                            let xv = xs[((c * ti + it as usize) * hi + ih as usize) * wi + iw as usize];
                                            let wv = w[(((o * conv.in_channels + c) * kt + a) * kh + bb) * kw + d];
                                            acc += xv * wv;
                                        }
                                    }
                                }
                            }
                            os[((o * vo[0] + ot) * vo[1] + oh) * vo[2] + ow] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn random_tensor(dims: [usize; 5], rng: &mut ChaCha8Rng) -> Tensor5 {
        let n = dims.iter().product();
        Tensor5::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (kernel, stride) in [
            ([3, 3, 3], [1, 1, 1]),
            ([3, 3, 3], [2, 2, 2]),
            ([1, 3, 3], [1, 2, 2]),
            ([3, 1, 1], [2, 1, 1]),
            ([1, 1, 1], [2, 2, 2]),
        ] {
            let mut store = ParamStore::new();
            let conv = Conv3d::new(&mut store, "c", 2, 3, kernel, stride, &mut rng);
            let x = random_tensor([2, 2, 5, 6, 7], &mut rng);
            let fast = conv.forward(&store, &x);
            let slow = naive_conv(&conv, store.get(conv.weight), &x);
            assert_eq!(fast.dims(), slow.dims());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{kernel:?} {stride:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <dy, conv(x)> is bilinear, so d/dx = conv^T(dy) and d/dw follow from
        // perturbing single entries.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let conv = Conv3d::new(&mut store, "c", 2, 3, [3, 3, 3], [2, 1, 2], &mut rng);
        let x = random_tensor([2, 2, 5, 4, 6], &mut rng);
        let y = conv.forward(&store, &x);
        let dy = random_tensor(y.dims(), &mut rng);
        let mut grads = store.zero_grads();
        let dx = conv.backward(&store, &x, &dy, &mut grads, true).unwrap();
        let objective = |store: &ParamStore, x: &Tensor5| -> f64 {
            conv.forward(store, x)
                .data()
                .iter()
                .zip(dy.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        for idx in [0, 7, 31, 100, dx.data().len() - 1] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += 1.0;
            let expected = objective(&store, &xp) - objective(&store, &x);
            assert!((dx.data()[idx] - expected).abs() < 1e-10);
        }
        for idx in [0, 5, 53, 161] {
            let mut sp = store.clone();
            sp.get_mut(conv.weight)[idx] += 1.0;
            let expected = objective(&sp, &x) - objective(&store, &x);
            assert!((grads.get(conv.weight)[idx] - expected).abs() < 1e-10);
        }
    }
}
