use image::RgbImage;

use crate::error::{input_err, Result};

/// Canonical decoded frame height.
pub const FRAME_HEIGHT: usize = 128;
/// Canonical decoded frame width.
pub const FRAME_WIDTH: usize = 171;

/// 8-bit RGB frame, row-major, channels interleaved.
pub type Frame = RgbImage;

/// Ordered frames of one video range; every frame has the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    height: usize,
    width: usize,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let (height, width) = match frames.first() {
            Some(f) => (f.height() as usize, f.width() as usize),
            None => (0, 0),
        };
        if frames
            .iter()
            .any(|f| f.height() as usize != height || f.width() as usize != width)
        {
            return Err(input_err!("frames in a sequence must share one size"));
        }
        Ok(Self { frames, height, width })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Bilinear resize with half-pixel centers (`src = (dst + 0.5) * scale - 0.5`,
/// clamped at the borders).
pub fn resize_bilinear(frame: &Frame, height: usize, width: usize) -> Result<Frame> {
    let (sh, sw) = (frame.height() as usize, frame.width() as usize);
    if sh == 0 || sw == 0 {
        return Err(input_err!("cannot resize an empty {sh}x{sw} frame"));
    }
    if height == 0 || width == 0 {
        return Err(input_err!("resize target {height}x{width} is empty"));
    }
    if (sh, sw) == (height, width) {
        return Ok(frame.clone());
    }
    let taps = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|d| {
                let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (pos.floor() as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let rows = taps(height, sh);
    let cols = taps(width, sw);
    let src = frame.as_raw();
    let mut out = vec![0u8; height * width * 3];
    for (y, &(y0, y1, fy)) in rows.iter().enumerate() {
        for (x, &(x0, x1, fx)) in cols.iter().enumerate() {
            for c in 0..3 {
                let p = |yy: usize, xx: usize| f64::from(src[(yy * sw + xx) * 3 + c]);
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(y * width + x) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(Frame::from_raw(width as u32, height as u32, out).expect("buffer sized for frame"))
}

/// Resize to the canonical 128x171 decode size.
pub fn resize_frame(frame: &Frame) -> Result<Frame> {
    resize_bilinear(frame, FRAME_HEIGHT, FRAME_WIDTH)
}

/// Single-channel intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(height * width, data.len());
        Self { height, width, data }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// ITU-R BT.601 luma.
pub fn to_gray(frame: &Frame) -> GrayImage {
    let data = frame
        .pixels()
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
        .collect();
    GrayImage::new(frame.height() as usize, frame.width() as usize, data)
}
