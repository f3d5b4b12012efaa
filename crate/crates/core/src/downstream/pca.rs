use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{input_err, Error, Result};
use crate::nn::Matrix;

/// Mean-centered projection onto the leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaEmbedding {
    /// `N x target_dim` coordinates.
    pub coords: Matrix,
    /// `target_dim x D` unit principal axes, one per row.
    pub axes: Matrix,
    pub mean: Vec<f64>,
    /// Variance along each retained axis, non-increasing.
    pub variances: Vec<f64>,
    /// Total variance of the input.
    pub total_variance: f64,
}

impl PcaEmbedding {
    pub fn explained_ratio(&self) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| {
                if self.total_variance > 0.0 {
                    v / self.total_variance
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Maps coordinates back to feature space.
    pub fn reconstruct(&self) -> Matrix {
        let (n, k, d) = (self.coords.rows(), self.axes.rows(), self.mean.len());
        let mut out = Matrix::zeros(n, d);
        for r in 0..n {
            let row = out.row_mut(r);
            row.copy_from_slice(&self.mean);
            for a in 0..k {
                let c = self.coords.row(r)[a];
                for (x, w) in row.iter_mut().zip(self.axes.row(a)) {
                    *x += c * w;
                }
            }
        }
        out
    }
}

/// Principal-component embedding of the rows of `features`.
///
/// Each axis is signed so its largest-magnitude loading is positive, which
/// makes the output a deterministic function of the input.
pub fn pca_embed(features: &Matrix, target_dim: usize) -> Result<PcaEmbedding> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(input_err!("PCA needs at least 2 samples, got {n}"));
    }
    if target_dim == 0 || target_dim > d {
        return Err(input_err!(
            "cannot embed {d}-dimensional features into {target_dim} dimensions"
        ));
    }
    if features.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let x = DMatrix::from_row_slice(n, d, features.data());
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let mut centered = x;
    for (j, m) in mean.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut axes = Matrix::zeros(target_dim, d);
    let mut variances = Vec::with_capacity(target_dim);
    for (a, &j) in order.iter().take(target_dim).enumerate() {
        let v = eig.eigenvectors.column(j);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (slot, x) in axes.row_mut(a).iter_mut().zip(v.iter()) {
            *slot = sign * x;
        }
        variances.push(eig.eigenvalues[j].max(0.0));
    }
    let mut coords = Matrix::zeros(n, target_dim);
    for r in 0..n {
        let row = centered.row(r);
        for a in 0..target_dim {
            coords.row_mut(r)[a] = row.iter().zip(axes.row(a)).map(|(x, w)| x * w).sum();
        }
    }
    Ok(PcaEmbedding {
        coords,
        axes,
        mean,
        variances,
        total_variance,
    })
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Writes a 2-D scatter plot as SVG, one color per label, with a legend.
/// `comment` is embedded verbatim as an XML comment.
pub fn write_scatter_svg(
    path: impl AsRef<Path>,
    coords: &Matrix,
    labels: &[usize],
    names: &[String],
    comment: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    if coords.cols() != 2 || coords.rows() != labels.len() {
        return Err(input_err!("scatter plot needs N x 2 coordinates and N labels"));
    }
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let xs: Vec<f64> = (0..coords.rows()).map(|r| coords.row(r)[0]).collect();
    let ys: Vec<f64> = (0..coords.rows()).map(|r| coords.row(r)[1]).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let ((x0, x1), (y0, y1)) = (range(&xs), range(&ys));
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    if let Some(c) = comment {
        writeln!(svg, "<!-- {} -->", c.replace("--", "- -")).expect("string write");
    }
    for ((x, y), l) in xs.iter().zip(&ys).zip(labels) {
        let px = pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        writeln!(
            svg,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{}\"/>",
            PALETTE[l % PALETTE.len()]
        )
        .expect("string write");
    }
    for (i, name) in names.iter().enumerate() {
        let y = pad + 14.0 + 16.0 * i as f64;
        writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>",
            pad + 10.0,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            pad + 18.0,
            y,
            xml_escape(name)
        )
        .expect("string write");
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
