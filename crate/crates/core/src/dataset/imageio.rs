//! 8-bit PNG I/O, decoded to / encoded from `[0, 1]` reals.

use std::path::Path;

use image::{ImageBuffer, Rgb, Rgba};
use ndarray::Array3;

use crate::error::{Error, Result};

/// Decodes any PNG to RGBA in `[0, 1]`, shape `(H, W, 4)`.
pub fn load_rgba(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgba8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(Array3::from_shape_vec((h as usize, w as usize, 4), data).expect("rgba buffer shape"))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes an `(H, W, 3)` or `(H, W, 4)` array as an 8-bit PNG.
pub fn save_png(path: &Path, pixels: &Array3<f64>) -> Result<()> {
    ensure_parent(path)?;
    let (h, w, c) = pixels.dim();
    let bytes: Vec<u8> = pixels.iter().map(|&v| to_u8(v)).collect();
    let res = match c {
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, bytes)
            .expect("rgb buffer shape")
            .save(path),
        4 => ImageBuffer::<Rgba<u8>, _>::from_raw(w as u32, h as u32, bytes)
            .expect("rgba buffer shape")
            .save(path),
        _ => return Err(Error::Shape(format!("cannot write {c}-channel image as PNG"))),
    };
    res.map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Quantizes to the 8-bit grid, as a save/load round trip would.
pub fn quantize(pixels: &Array3<f64>) -> Array3<f64> {
    pixels.mapv(|v| to_u8(v) as f64 / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgba_round_trip_on_the_8bit_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Array3::from_shape_fn((3, 5, 4), |(r, c, k)| ((r * 31 + c * 7 + k * 50) % 256) as f64 / 255.0);
        save_png(&path, &img).unwrap();
        assert_eq!(load_rgba(&path).unwrap(), img);
    }

    #[test]
    fn rgb_loads_with_opaque_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        save_png(&path, &Array3::from_elem((2, 2, 3), 0.2)).unwrap();
        let back = load_rgba(&path).unwrap();
        assert!(back.slice(ndarray::s![.., .., 3]).iter().all(|&a| a == 1.0));
    }
}
