//! Scene images: raw frames, CLAHE contrast enhancement, and the fixed
//! 64x64 network input format.

mod clahe;
mod io;

pub use clahe::{equalize_tile_lut, preprocess_frame, preprocess_frame_indexed, ClaheConfig};
pub use io::{frame_file_name, load_frame_image, save_frame_image};

use crate::error::{Error, Result};

/// Side length of the network input image.
pub const FRAME_SIZE: usize = 64;
const CHANNELS: usize = 3;

/// A raw RGB image at source resolution, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize) -> Self {
        RawImage {
            width,
            height,
            rgb: vec![0; width * height * CHANNELS],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.rgb[i..i + 3].copy_from_slice(&px);
    }

    /// Rec. 601 luma of a pixel, rounded to u8.
    pub fn luminance(&self, x: usize, y: usize) -> u8 {
        let [r, g, b] = self.get(x, y);
        luma(r, g, b)
    }
}

pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

/// A preprocessed 64x64x3 scene image with values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub frame: u32,
    pixels: Vec<f64>,
}

impl ImageFrame {
    pub fn new(frame: u32, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != FRAME_SIZE * FRAME_SIZE * CHANNELS {
            return Err(Error::Dimension {
                context: "ImageFrame pixels",
                expected: FRAME_SIZE * FRAME_SIZE * CHANNELS,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Image("pixel value outside [0,1]".into()));
        }
        Ok(ImageFrame { frame, pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len() -> usize {
        FRAME_SIZE * FRAME_SIZE * CHANNELS
    }

    /// Pixel value at (x, y, channel); layout is row-major with interleaved
    /// channels, matching [`RawImage`].
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * FRAME_SIZE + x) * CHANNELS + c]
    }

    /// Mean luminance standard deviation over the frame (used by tests and
    /// preprocessing diagnostics).
    pub fn luminance_std(&self) -> f64 {
        let n = FRAME_SIZE * FRAME_SIZE;
        let mut lums = Vec::with_capacity(n);
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                lums.push(
                    0.299 * self.get(x, y, 0) + 0.587 * self.get(x, y, 1)
                        + 0.114 * self.get(x, y, 2),
                );
            }
        }
        let mean = lums.iter().sum::<f64>() / n as f64;
        (lums.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    }
}

/// Area-average resize of an RGB byte image to `FRAME_SIZE` square, with
/// fractional source-pixel coverage, returning values scaled to [0,1].
pub(crate) fn resize_area(img: &RawImage) -> Vec<f64> {
    let (w, h) = (img.width as f64, img.height as f64);
    let sx = w / FRAME_SIZE as f64;
    let sy = h / FRAME_SIZE as f64;
    let mut out = vec![0.0; FRAME_SIZE * FRAME_SIZE * CHANNELS];
    for oy in 0..FRAME_SIZE {
        let y0 = oy as f64 * sy;
        let y1 = (oy + 1) as f64 * sy;
        for ox in 0..FRAME_SIZE {
            let x0 = ox as f64 * sx;
            let x1 = (ox + 1) as f64 * sx;
            let mut acc = [0.0f64; 3];
            let mut area = 0.0;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(img.height);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(img.width);
            for iy in iy0..iy1 {
                let cov_y = (y1.min((iy + 1) as f64) - y0.max(iy as f64)).max(0.0);
                for ix in ix0..ix1 {
                    let cov = cov_y * (x1.min((ix + 1) as f64) - x0.max(ix as f64)).max(0.0);
                    let px = img.get(ix, iy);
                    for c in 0..3 {
                        acc[c] += cov * px[c] as f64;
                    }
                    area += cov;
                }
            }
            let base = (oy * FRAME_SIZE + ox) * CHANNELS;
            for c in 0..3 {
                out[base + c] = (acc[c] / (area * 255.0)).clamp(0.0, 1.0);
            }
        }
    }
    out
}
