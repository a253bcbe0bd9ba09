//! PNG image output/input and the JSON camera manifest.
//!
//! Metrics are always computed on in-memory float images; PNG is only the
//! 8-bit presentation format.

use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::img::ImageBuf;

pub fn write_png(path: &Path, image: &ImageBuf) -> Result<()> {
    let rgb = image.to_rgb8();
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(image.width as u32, image.height as u32, rgb)
            .ok_or_else(|| Error::InvalidParameter("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::InvalidParameter(format!("png encode failed: {e}")))?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<ImageBuf> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidParameter(format!("png decode failed: {e}")))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageBuf::new(w, h);
    for (i, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            out.data[i * 3 + ch] = px.0[ch] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Camera manifest: a JSON array of camera records.
pub fn write_camera_manifest(path: &Path, cameras: &[Camera]) -> Result<()> {
    let text = serde_json::to_string_pretty(cameras)
        .map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_camera_manifest(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path)?;
    let cameras: Vec<Camera> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("camera manifest: {e}")))?;
    for cam in &cameras {
        cam.validate()?;
    }
    Ok(cameras)
}
