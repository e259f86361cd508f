//! SVG emission: trajectory overlays on scene images and synthesis preview
//! contact sheets. All output is deterministic text.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{ImageFrame, RawImage, FRAME_SIZE};

const OBS_COLOR: &str = "#4fc3f7";
const TRUTH_COLOR: &str = "#ffd54f";
const PRED_COLOR: &str = "#66bb6a";
const SAMPLE_COLOR: &str = "#66bb6a";

fn base64(data: &[u8]) -> String {
    const TABLE: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [
            chunk[0],
            chunk.get(1).copied().unwrap_or(0),
            chunk.get(2).copied().unwrap_or(0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(TABLE[(n >> 18) as usize & 63] as char);
        out.push(TABLE[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            TABLE[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            TABLE[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

fn png_bytes(img: &RawImage) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.rgb.clone())
        .ok_or_else(|| Error::Image("pixel buffer does not match dimensions".into()))?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(bytes.into_inner())
}

fn frame_to_raw(frame: &ImageFrame) -> RawImage {
    let mut raw = RawImage::new(FRAME_SIZE, FRAME_SIZE);
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            let px = [
                (frame.get(x, y, 0) * 255.0).round() as u8,
                (frame.get(x, y, 1) * 255.0).round() as u8,
                (frame.get(x, y, 2) * 255.0).round() as u8,
            ];
            raw.set(x, y, px);
        }
    }
    raw
}

fn polyline(out: &mut String, pts: &[(f64, f64)], size: f64, color: &str, width: f64, opacity: f64) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", x * size, y * size))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}" />"#,
        coords.join(" ")
    );
    for (x, y) in pts {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}" fill-opacity="{opacity}" />"#,
            x * size,
            y * size,
            width * 1.2
        );
    }
}

/// One evaluation window rendered over its scene image: observed trajectory,
/// ground-truth future, the model's point prediction, and optional sampled
/// rollouts.
pub fn trajectory_plot_svg(
    scene_image: Option<&ImageFrame>,
    obs: &[(f64, f64)],
    truth: &[(f64, f64)],
    predicted: &[(f64, f64)],
    samples: &[Vec<(f64, f64)>],
) -> Result<String> {
    let size = 512.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    match scene_image {
        Some(frame) => {
            let png = png_bytes(&frame_to_raw(frame))?;
            let _ = writeln!(
                out,
                r#"<image href="data:image/png;base64,{}" x="0" y="0" width="{size}" height="{size}" style="image-rendering: pixelated" />"#,
                base64(&png)
            );
        }
        None => {
            let _ = writeln!(
                out,
                r##"<rect x="0" y="0" width="{size}" height="{size}" fill="#1a1e24" />"##
            );
        }
    }
    for s in samples {
        polyline(&mut out, s, size, SAMPLE_COLOR, 1.2, 0.35);
    }
    polyline(&mut out, obs, size, OBS_COLOR, 2.5, 1.0);
    polyline(&mut out, truth, size, TRUTH_COLOR, 2.5, 1.0);
    polyline(&mut out, predicted, size, PRED_COLOR, 2.5, 1.0);
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

/// Contact sheet of raw frames for synthesis previews.
pub fn contact_sheet_svg(frames: &[RawImage], columns: usize) -> Result<String> {
    let columns = columns.max(1);
    let tile = 128.0;
    let rows = frames.len().div_ceil(columns);
    let width = tile * columns as f64;
    let height = tile * rows as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (i, frame) in frames.iter().enumerate() {
        let x = (i % columns) as f64 * tile;
        let y = (i / columns) as f64 * tile;
        let png = png_bytes(frame)?;
        let _ = writeln!(
            out,
            r#"<image href="data:image/png;base64,{}" x="{x}" y="{y}" width="{tile}" height="{tile}" />"#,
            base64(&png)
        );
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

pub fn save_svg(path: impl AsRef<Path>, svg: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
