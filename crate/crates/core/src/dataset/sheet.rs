use ndarray::{s, Array3, Axis};

use crate::error::{Error, Result};
use crate::types::SpriteFrame;

/// Cuts a packed sheet into `rows * cols` frames of `frame_size = (h, w)`,
/// row-major.
pub fn slice_sprite_sheet(sheet: &Array3<f64>, grid: (usize, usize), frame_size: (usize, usize)) -> Result<Vec<SpriteFrame>> {
    let (rows, cols) = grid;
    let (fh, fw) = frame_size;
    let (h, w, _) = sheet.dim();
    if rows == 0 || cols == 0 || h != rows * fh || w != cols * fw {
        return Err(Error::Shape(format!(
            "sheet is {h}x{w}, grid {rows}x{cols} of {fh}x{fw} frames needs {}x{}",
            rows * fh,
            cols * fw
        )));
    }
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .enumerate()
        .map(|(i, (r, c))| {
            let tile = sheet.slice(s![r * fh..(r + 1) * fh, c * fw..(c + 1) * fw, ..]).to_owned();
            SpriteFrame::new(tile, i)
        })
        .collect()
}

/// Inverse of [`slice_sprite_sheet`]: lays equally sized frames out
/// row-major on a `rows x cols` grid.
pub fn pack_sprite_sheet(frames: &[Array3<f64>], grid: (usize, usize)) -> Result<Array3<f64>> {
    let (rows, cols) = grid;
    if frames.len() != rows * cols || frames.is_empty() {
        return Err(Error::Shape(format!("{} frames for a {rows}x{cols} grid", frames.len())));
    }
    let dim = frames[0].dim();
    if frames.iter().any(|f| f.dim() != dim) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    let strips: Vec<Array3<f64>> = frames
        .chunks(cols)
        .map(|row| ndarray::concatenate(Axis(1), &row.iter().map(|f| f.view()).collect::<Vec<_>>()).unwrap())
        .collect();
    Ok(ndarray::concatenate(Axis(0), &strips.iter().map(|s| s.view()).collect::<Vec<_>>()).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheet(h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((h, w, 4), |(r, c, k)| ((r * 13 + c * 5 + k) % 97) as f64 / 96.0)
    }

    #[test]
    fn wide_strip_yields_four_frames() {
        let frames = slice_sprite_sheet(&sheet(128, 512), (1, 4), (128, 128)).unwrap();
        assert_eq!(frames.len(), 4);
        assert!(frames.iter().all(|f| f.pixels().dim() == (128, 128, 4)));
        assert_eq!(frames.iter().map(|f| f.index()).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(frames[2].pixels()[[5, 7, 1]], sheet(128, 512)[[5, 256 + 7, 1]]);
    }

    #[test]
    fn single_cell_is_identity() {
        let s = sheet(128, 128);
        let frames = slice_sprite_sheet(&s, (1, 1), (128, 128)).unwrap();
        assert_eq!(frames[0].pixels(), &s);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(slice_sprite_sheet(&sheet(100, 512), (1, 4), (128, 128)).is_err());
        assert!(slice_sprite_sheet(&sheet(128, 128), (0, 1), (128, 128)).is_err());
    }

    #[test]
    fn multi_row_repack_is_identity() {
        let s = sheet(6, 9);
        let frames: Vec<_> = slice_sprite_sheet(&s, (2, 3), (3, 3))
            .unwrap()
            .into_iter()
            .map(SpriteFrame::into_pixels)
            .collect();
        assert_eq!(pack_sprite_sheet(&frames, (2, 3)).unwrap(), s);
    }
}
