use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::RawImage;

/// Load a raster frame image (PNG) as raw RGB bytes.
pub fn load_frame_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .into_rgb8();
    Ok(RawImage {
        width: img.width() as usize,
        height: img.height() as usize,
        rgb: img.into_raw(),
    })
}

/// Write raw RGB bytes as a PNG.
pub fn save_frame_image(path: impl AsRef<Path>, img: &RawImage) -> Result<()> {
    let path = path.as_ref();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.rgb.clone())
        .ok_or_else(|| Error::Image("pixel buffer does not match dimensions".into()))?;
    buf.save(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Conventional file name for the frame at `index`.
pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index}.png")
}
