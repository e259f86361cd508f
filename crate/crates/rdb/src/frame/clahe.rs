//! Contrast-limited adaptive histogram equalization on the luminance
//! channel, followed by area-average downsampling to the network input size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{resize_area, ImageFrame, RawImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheConfig {
    /// Tile grid is `tiles` x `tiles`.
    pub tiles: usize,
    /// Histogram bins above `clip_limit * tile_area / 256` are clipped and
    /// their excess redistributed before equalization.
    pub clip_limit: f64,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        ClaheConfig {
            tiles: 8,
            clip_limit: 2.0,
        }
    }
}

/// Equalization LUT for one tile: histogram, clip + redistribute, CDF.
pub fn equalize_tile_lut(lums: &[u8], clip_limit: f64) -> [u8; 256] {
    let area = lums.len();
    let mut hist = [0usize; 256];
    for &l in lums {
        hist[l as usize] += 1;
    }
    if clip_limit.is_finite() && clip_limit > 0.0 {
        let cap = ((clip_limit * area as f64 / 256.0).max(1.0)).floor() as usize;
        let mut clipped = 0usize;
        for bin in hist.iter_mut() {
            if *bin > cap {
                clipped += *bin - cap;
                *bin = cap;
            }
        }
        let batch = clipped / 256;
        let mut residual = clipped % 256;
        for bin in hist.iter_mut() {
            *bin += batch;
        }
        let mut i = 0;
        let step = if residual > 0 { (256 / residual).max(1) } else { 1 };
        while residual > 0 && i < 256 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
    let mut lut = [0u8; 256];
    let mut cdf = 0usize;
    for (i, slot) in lut.iter_mut().enumerate() {
        cdf += hist[i];
        *slot = ((cdf as f64 * 255.0 / area as f64).round()).clamp(0.0, 255.0) as u8;
    }
    lut
}

/// CLAHE on the luminance channel with bilinear blending between tile LUTs,
/// then resize to 64x64 by area averaging and scale into [0,1].
pub fn preprocess_frame(raw: &RawImage, tiles: usize, clip_limit: f64) -> Result<ImageFrame> {
    preprocess_frame_indexed(raw, tiles, clip_limit, 0)
}

/// Same as [`preprocess_frame`] but tags the output with a frame index.
pub fn preprocess_frame_indexed(
    raw: &RawImage,
    tiles: usize,
    clip_limit: f64,
    frame: u32,
) -> Result<ImageFrame> {
    if raw.width == 0 || raw.height == 0 {
        return Err(Error::Image("zero-size image".into()));
    }
    if tiles == 0 {
        return Err(Error::Config("tile grid must be at least 1x1".into()));
    }
    let lum: Vec<u8> = (0..raw.height)
        .flat_map(|y| (0..raw.width).map(move |x| (x, y)))
        .map(|(x, y)| raw.luminance(x, y))
        .collect();

    // Per-tile LUTs. Tile edges partition the image; the last tile absorbs
    // the remainder when dimensions do not divide evenly.
    let tw = raw.width.div_ceil(tiles);
    let th = raw.height.div_ceil(tiles);
    let mut luts = vec![[0u8; 256]; tiles * tiles];
    for ty in 0..tiles {
        for tx in 0..tiles {
            let x0 = tx * tw;
            let x1 = ((tx + 1) * tw).min(raw.width);
            let y0 = ty * th;
            let y1 = ((ty + 1) * th).min(raw.height);
            if x0 >= x1 || y0 >= y1 {
                luts[ty * tiles + tx] = identity_lut();
                continue;
            }
            let mut tile = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                tile.extend_from_slice(&lum[y * raw.width + x0..y * raw.width + x1]);
            }
            luts[ty * tiles + tx] = equalize_tile_lut(&tile, clip_limit);
        }
    }

    // Bilinear interpolation between the four surrounding tile LUTs, then
    // rescale RGB by the luminance gain.
    let mut enhanced = RawImage::new(raw.width, raw.height);
    for y in 0..raw.height {
        let fy = (y as f64 + 0.5) / th as f64 - 0.5;
        let ty0 = fy.floor().max(0.0) as usize;
        let ty1 = (ty0 + 1).min(tiles - 1);
        let wy = (fy - fy.floor()).clamp(0.0, 1.0);
        let wy = if fy < 0.0 { 0.0 } else { wy };
        for x in 0..raw.width {
            let fx = (x as f64 + 0.5) / tw as f64 - 0.5;
            let tx0 = fx.floor().max(0.0) as usize;
            let tx1 = (tx0 + 1).min(tiles - 1);
            let wx = (fx - fx.floor()).clamp(0.0, 1.0);
            let wx = if fx < 0.0 { 0.0 } else { wx };
            let l = lum[y * raw.width + x] as usize;
            let tl = luts[ty0 * tiles + tx0][l] as f64;
            let tr = luts[ty0 * tiles + tx1][l] as f64;
            let bl = luts[ty1 * tiles + tx0][l] as f64;
            let br = luts[ty1 * tiles + tx1][l] as f64;
            let new_l = (1.0 - wy) * ((1.0 - wx) * tl + wx * tr)
                + wy * ((1.0 - wx) * bl + wx * br);
            let old_l = (l as f64).max(1.0);
            let gain = new_l / old_l;
            let [r, g, b] = raw.get(x, y);
            enhanced.set(
                x,
                y,
                [
                    (r as f64 * gain).round().clamp(0.0, 255.0) as u8,
                    (g as f64 * gain).round().clamp(0.0, 255.0) as u8,
                    (b as f64 * gain).round().clamp(0.0, 255.0) as u8,
                ],
            );
        }
    }

    ImageFrame::new(frame, resize_area(&enhanced))
}

fn identity_lut() -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = i as u8;
    }
    lut
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FRAME_SIZE;

    fn uniform_image(w: usize, h: usize, px: [u8; 3]) -> RawImage {
        let mut img = RawImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, px);
            }
        }
        img
    }

    #[test]
    fn flat_histogram_is_identity_up_to_resize() {
        // Equalizing a constant image maps its single gray level near 255 in
        // the LUT, but the LUT gain cancels in relative terms: all output
        // pixels stay equal to each other.
        let img = uniform_image(128, 128, [100, 100, 100]);
        let out = preprocess_frame(&img, 8, 2.0).unwrap();
        let first = out.get(0, 0, 0);
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                for c in 0..3 {
                    assert!((out.get(x, y, c) - first).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn checkerboard_shape_and_range() {
        let mut img = RawImage::new(128, 128);
        for y in 0..128 {
            for x in 0..128 {
                let v = if (x / 8 + y / 8) % 2 == 0 { 40 } else { 200 };
                img.set(x, y, [v, v, v]);
            }
        }
        let out = preprocess_frame(&img, 8, 2.0).unwrap();
        assert_eq!(out.pixels().len(), FRAME_SIZE * FRAME_SIZE * 3);
        assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_size_image_errors() {
        let img = RawImage::new(0, 0);
        assert!(preprocess_frame(&img, 8, 2.0).is_err());
    }

    /// Independent plain histogram-equalization oracle for one tile.
    fn hist_eq_oracle(lums: &[u8]) -> [u8; 256] {
        let mut hist = [0usize; 256];
        for &l in lums {
            hist[l as usize] += 1;
        }
        let mut lut = [0u8; 256];
        let mut cdf = 0usize;
        for i in 0..256 {
            cdf += hist[i];
            lut[i] = ((cdf as f64 * 255.0 / lums.len() as f64).round()).min(255.0) as u8;
        }
        lut
    }

    #[test]
    fn single_tile_matches_plain_equalization_and_boosts_contrast() {
        // Low-contrast horizontal gradient spanning gray levels 100..=131.
        let mut img = RawImage::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                let v = 100 + (x / 2) as u8;
                img.set(x, y, [v, v, v]);
            }
        }
        let lums: Vec<u8> = (0..64)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .map(|(x, y)| img.luminance(x, y))
            .collect();

        // With one tile and an unbounded clip limit, the CLAHE LUT reduces to
        // plain histogram equalization.
        let ours = equalize_tile_lut(&lums, f64::INFINITY);
        let oracle = hist_eq_oracle(&lums);
        assert_eq!(ours[..], oracle[..]);

        let input_frame = ImageFrame::new(0, resize_area(&img)).unwrap();
        let out = preprocess_frame(&img, 1, f64::INFINITY).unwrap();
        assert!(
            out.luminance_std() >= input_frame.luminance_std(),
            "equalization should not reduce contrast: {} < {}",
            out.luminance_std(),
            input_frame.luminance_std()
        );
    }
}
