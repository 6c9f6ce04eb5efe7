//! Pixel-centre rasterization primitives on `(H, W, C)` arrays.
//! Pixel `(row, col)` is the point `(x, y) = (col, row)`.

use ndarray::Array3;

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn paint(img: &mut Array3<f64>, r: usize, c: usize, color: &[f64]) {
    for (k, &v) in color.iter().enumerate() {
        img[[r, c, k]] = v;
    }
}

/// Sets every pixel whose centre lies within `radius` of the segment `a-b`.
pub fn draw_segment(img: &mut Array3<f64>, a: (f64, f64), b: (f64, f64), radius: f64, color: &[f64]) {
    let (h, w, _) = img.dim();
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + radius).ceil().max(0.0) as usize).min(w.saturating_sub(1));
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
    let y1 = ((a.1.max(b.1) + radius).ceil().max(0.0) as usize).min(h.saturating_sub(1));
    for r in y0..=y1 {
        for c in x0..=x1 {
            if segment_distance(c as f64, r as f64, a, b) <= radius {
                paint(img, r, c, color);
            }
        }
    }
}

pub fn draw_disc(img: &mut Array3<f64>, centre: (f64, f64), radius: f64, color: &[f64]) {
    draw_segment(img, centre, centre, radius, color);
}
