//! Tiny deterministic rasterizer for synthetic scenes.

use crate::frame::RawImage;

pub fn fill(img: &mut RawImage, color: [u8; 3]) {
    for px in img.rgb.chunks_exact_mut(3) {
        px.copy_from_slice(&color);
    }
}

/// Axis-aligned rectangle in normalized [0,1] coordinates, inclusive bounds.
pub fn fill_rect(img: &mut RawImage, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    let w = img.width as f64;
    let h = img.height as f64;
    let px0 = (x0 * w).floor().max(0.0) as usize;
    let py0 = (y0 * h).floor().max(0.0) as usize;
    let px1 = ((x1 * w).ceil() as usize).min(img.width);
    let py1 = ((y1 * h).ceil() as usize).min(img.height);
    for y in py0..py1 {
        for x in px0..px1 {
            img.set(x, y, color);
        }
    }
}

/// Filled disc; center in normalized coordinates, radius as a fraction of
/// the image width.
pub fn fill_disc(img: &mut RawImage, cx: f64, cy: f64, radius: f64, color: [u8; 3]) {
    let w = img.width as f64;
    let h = img.height as f64;
    let pcx = cx * w;
    let pcy = cy * h;
    let pr = radius * w;
    let x0 = ((pcx - pr).floor().max(0.0)) as usize;
    let x1 = (((pcx + pr).ceil() as usize) + 1).min(img.width);
    let y0 = ((pcy - pr).floor().max(0.0)) as usize;
    let y1 = (((pcy + pr).ceil() as usize) + 1).min(img.height);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - pcx;
            let dy = y as f64 + 0.5 - pcy;
            if dx * dx + dy * dy <= pr * pr {
                img.set(x, y, color);
            }
        }
    }
}

/// Centroid (in source pixels) of all pixels exactly matching a color.
pub fn color_centroid(img: &RawImage, color: [u8; 3]) -> Option<(f64, f64)> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0usize;
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(x, y) == color {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1;
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some((sx / n as f64, sy / n as f64))
    }
}

/// Distinct agent colors (kept away from wall/background/landmark hues).
pub const AGENT_PALETTE: [[u8; 3]; 6] = [
    [66, 135, 245],
    [245, 197, 66],
    [66, 245, 200],
    [245, 66, 172],
    [172, 245, 66],
    [245, 108, 66],
];
