//! 8-bit PNG / PPM output and input.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Image;

/// Clamp to `[0, 1]` and quantize with round-half-up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn to_rgb8(img: &Image) -> Vec<u8> {
    img.pixels
        .iter()
        .flat_map(|p| p.iter().map(|&c| quantize(c)))
        .collect()
}

/// Writes PPM (P6) when the extension is `.ppm`, PNG otherwise.
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if img.pixels.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("image contains non-finite values".into()));
    }
    let bytes = to_rgb8(img);
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
        out.extend_from_slice(&bytes);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    } else {
        let buf = image::RgbImage::from_raw(img.width, img.height, bytes)
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::io(path, std::io::Error::other(other)),
            })
    }
}

/// Reads an 8-bit image back into `[0, 1]` floats.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Data {
                path: path.to_path_buf(),
                record: None,
                message: other.to_string(),
            },
        })?
        .to_rgb8();
    Ok(Image {
        width: img.width(),
        height: img.height(),
        pixels: img
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect(),
    })
}
