//! Histogram-of-oriented-gradients frame descriptor.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::video::{GrayImage, FRAME_HEIGHT, FRAME_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockNorm {
    /// L2 normalization, clipping at `clip`, then L2 renormalization.
    L2Hys { clip: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogParams {
    /// `[rows, cols]` pixels per cell.
    pub cell_size: [usize; 2],
    /// Unsigned orientation bins over `[0, 180)` degrees.
    pub orientation_bins: usize,
    /// `[rows, cols]` cells per block; blocks step by one cell.
    pub block_size: [usize; 2],
    pub block_norm: BlockNorm,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell_size: [16, 16],
            orientation_bins: 9,
            block_size: [2, 2],
            block_norm: BlockNorm::L2Hys { clip: 0.2 },
        }
    }
}

const NORM_EPS: f64 = 1e-5;

impl HogParams {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size.contains(&0) || self.block_size.contains(&0) || self.orientation_bins == 0 {
            return Err(input_err!("HOG cell size, block size and bin count must be positive"));
        }
        Ok(())
    }

    /// `(cells_y, cells_x)`; partial cells at the bottom and right are ignored.
    pub fn cells(&self, height: usize, width: usize) -> (usize, usize) {
        (height / self.cell_size[0], width / self.cell_size[1])
    }

    pub fn blocks(&self, height: usize, width: usize) -> (usize, usize) {
        let (cy, cx) = self.cells(height, width);
        (
            (cy + 1).saturating_sub(self.block_size[0]),
            (cx + 1).saturating_sub(self.block_size[1]),
        )
    }

    pub fn descriptor_len(&self, height: usize, width: usize) -> usize {
        let (by, bx) = self.blocks(height, width);
        by * bx * self.block_size[0] * self.block_size[1] * self.orientation_bins
    }
}

/// Descriptor of a canonical 128x171 greyscale frame.
///
/// Layout is `(block_row, block_col, cell_row, cell_col, bin)`, row-major.
pub fn hog_descriptor(frame: &GrayImage, params: &HogParams) -> Result<Vec<f64>> {
    if (frame.height, frame.width) != (FRAME_HEIGHT, FRAME_WIDTH) {
        return Err(input_err!(
            "HOG expects a {FRAME_HEIGHT}x{FRAME_WIDTH} frame, got {}x{}",
            frame.height,
            frame.width
        ));
    }
    hog_any_size(frame, params)
}

/// Same as [`hog_descriptor`] without the canonical-size precondition.
pub fn hog_any_size(frame: &GrayImage, params: &HogParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (h, w) = (frame.height, frame.width);
    let (cells_y, cells_x) = params.cells(h, w);
    let (blocks_y, blocks_x) = params.blocks(h, w);
    if blocks_y == 0 || blocks_x == 0 {
        return Err(input_err!("frame {h}x{w} is smaller than one HOG block"));
    }
    let bins = params.orientation_bins;
    let bin_width = 180.0 / bins as f64;

    // Central differences; border rows and columns have zero gradient.
    let mut hist = vec![0.0; cells_y * cells_x * bins];
    let [ch, cw] = params.cell_size;
    for y in 0..cells_y * ch {
        for x in 0..cells_x * cw {
            let g_row = if y == 0 || y + 1 == h {
                0.0
            } else {
                frame.at(y + 1, x) - frame.at(y - 1, x)
            };
            let g_col = if x == 0 || x + 1 == w {
                0.0
            } else {
                frame.at(y, x + 1) - frame.at(y, x - 1)
            };
            let magnitude = g_row.hypot(g_col);
            if magnitude == 0.0 {
                continue;
            }
            let orientation = g_row.atan2(g_col).to_degrees().rem_euclid(180.0);
            let bin = ((orientation / bin_width) as usize).min(bins - 1);
            hist[((y / ch) * cells_x + x / cw) * bins + bin] += magnitude;
        }
    }
    let area = (ch * cw) as f64;
    hist.iter_mut().for_each(|v| *v /= area);

    let [by, bx] = params.block_size;
    let block_len = by * bx * bins;
    let mut out = Vec::with_capacity(blocks_y * blocks_x * block_len);
    let mut block = Vec::with_capacity(block_len);
    for r in 0..blocks_y {
        for c in 0..blocks_x {
            block.clear();
            for cr in 0..by {
                for cc in 0..bx {
                    let start = ((r + cr) * cells_x + c + cc) * bins;
                    block.extend_from_slice(&hist[start..start + bins]);
                }
            }
            normalize_block(&mut block, params.block_norm);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn normalize_block(block: &mut [f64], norm: BlockNorm) {
    let l2 = |b: &[f64]| (b.iter().map(|v| v * v).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
    match norm {
        BlockNorm::L2Hys { clip } => {
            let n = l2(block);
            block.iter_mut().for_each(|v| *v = (*v / n).min(clip));
            let n = l2(block);
            block.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Mean absolute elementwise difference of two descriptors.
pub fn frame_difference(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(input_err!("descriptor lengths differ: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(f: impl Fn(usize, usize) -> f64) -> GrayImage {
        let data = (0..FRAME_HEIGHT * FRAME_WIDTH)
            .map(|i| f(i / FRAME_WIDTH, i % FRAME_WIDTH))
            .collect();
        GrayImage::new(FRAME_HEIGHT, FRAME_WIDTH, data)
    }

    #[test]
    fn canonical_length() {
        let p = HogParams::default();
        assert_eq!(p.cells(128, 171), (8, 10));
        assert_eq!(p.blocks(128, 171), (7, 9));
        assert_eq!(p.descriptor_len(128, 171), 2268);
        let d = hog_descriptor(&image(|y, x| ((x * y) % 7) as f64 / 7.0), &p).unwrap();
        assert_eq!(d.len(), 2268);
    }

    #[test]
    fn constant_frame_is_zero() {
        let d = hog_descriptor(&image(|_, _| 0.4), &HogParams::default()).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn blocks_are_unit_bounded() {
        let d = hog_descriptor(
            &image(|y, x| ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos() + 1.0) / 2.0),
            &HogParams::default(),
        )
        .unwrap();
        for block in d.chunks(36) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 1.0 + 1e-12);
            assert!(block.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn wrong_size_rejected() {
        let g = GrayImage::new(64, 64, vec![0.0; 64 * 64]);
        assert!(hog_descriptor(&g, &HogParams::default()).is_err());
    }

    #[test]
    fn difference_definition() {
        assert_eq!(frame_difference(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(frame_difference(&[0.0, 0.0], &[0.5, -1.5]).unwrap(), 1.0);
        assert!(frame_difference(&[0.0], &[0.0, 1.0]).is_err());
    }
}
