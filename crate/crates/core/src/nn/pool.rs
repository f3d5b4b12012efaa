use super::tensor::{Matrix, Tensor5};

/// Non-overlapping average pooling with window == stride. Trailing positions
/// that do not fill a window are dropped.
pub fn avg_pool(x: &Tensor5, window: [usize; 3]) -> Tensor5 {
    if window == [1, 1, 1] {
        return x.clone();
    }
    let [n, c, t, h, w] = x.dims();
    let [pt, ph, pw] = window;
    let (to, ho, wo) = (t / pt, h / ph, w / pw);
    let norm = 1.0 / (pt * ph * pw) as f64;
    let mut out = Tensor5::zeros([n, c, to, ho, wo]);
    for b in 0..n {
        let src = x.sample(b);
        let dst = out.sample_mut(b);
        for ch in 0..c {
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = 0.0;
                        for a in 0..pt {
                            for bb in 0..ph {
                                let row = ((ch * t + ot * pt + a) * h + oh * ph + bb) * w + ow * pw;
                                acc += src[row..row + pw].iter().sum::<f64>();
                            }
                        }
                        dst[((ch * to + ot) * ho + oh) * wo + ow] = acc * norm;
                    }
                }
            }
        }
    }
    out
}

/// Mean over every remaining time/space position: `[n, c, ...] -> n x c`.
pub fn global_avg_pool(x: &Tensor5) -> Matrix {
    let c = x.channels();
    let spatial: usize = x.volume().iter().product();
    let mut out = Matrix::zeros(x.batch(), c);
    for b in 0..x.batch() {
        let s = x.sample(b);
        for (ch, slot) in out.row_mut(b).iter_mut().enumerate() {
            *slot = s[ch * spatial..(ch + 1) * spatial].iter().sum::<f64>() / spatial as f64;
        }
    }
    out
}

pub fn global_avg_pool_backward(dims: [usize; 5], df: &Matrix) -> Tensor5 {
    let spatial: usize = dims[2..].iter().product();
    let mut dx = Tensor5::zeros(dims);
    for b in 0..dims[0] {
        let g = df.row(b).to_vec();
        let s = dx.sample_mut(b);
        for (ch, gv) in g.iter().enumerate() {
            s[ch * spatial..(ch + 1) * spatial].fill(gv / spatial as f64);
        }
    }
    dx
}
