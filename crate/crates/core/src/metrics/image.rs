//! Per-image similarity metrics on `(H, W, C)` arrays in `[0, 1]`.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Array3<f64>, b: &Array3<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("images differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::Empty("image has no pixels".into()));
    }
    Ok(())
}

/// Normalized 1-D Gaussian taps of length [`SSIM_WINDOW`].
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Valid-mode separable Gaussian filter.
fn filter(x: &ArrayView2<f64>, g: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = x.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for r in 0..h {
        for c in 0..ow {
            rows[[r, c]] = (0..SSIM_WINDOW).map(|k| g[k] * x[[r, c + k]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for r in 0..oh {
        for c in 0..ow {
            out[[r, c]] = (0..SSIM_WINDOW).map(|k| g[k] * rows[[r + k, c]]).sum();
        }
    }
    out
}

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
/// channels, with dynamic range 1.
pub fn ssim(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w, ch) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let g = gaussian_taps();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for k in 0..ch {
        let x = a.index_axis(Axis(2), k);
        let y = b.index_axis(Axis(2), k);
        let mx = filter(&x, &g);
        let my = filter(&y, &g);
        let mxx = filter(&(&x * &x).view(), &g);
        let myy = filter(&(&y * &y).view(), &g);
        let mxy = filter(&(&x * &y).view(), &g);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx.as_slice().unwrap()[i], my.as_slice().unwrap()[i]);
            let vx = mxx.as_slice().unwrap()[i] - ux * ux;
            let vy = myy.as_slice().unwrap()[i] - uy * uy;
            let cxy = mxy.as_slice().unwrap()[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / ch as f64)
}

pub fn mse(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(1 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Array3<f64>, b: &Array3<f64>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / m).log10() })
}

/// Maps an image to a stack of feature layers, each `(H, W, C)`.
pub trait FeatureExtractor {
    fn features(&self, img: &Array3<f64>) -> Vec<Array3<f64>>;

    fn layer_weights(&self, layers: usize) -> Vec<f64> {
        vec![1.0 / layers as f64; layers]
    }
}

/// The image itself as a single layer.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn features(&self, img: &Array3<f64>) -> Vec<Array3<f64>> {
        vec![img.clone()]
    }
}

/// The image at full, half and quarter resolution (2x2 average pooling).
#[derive(Clone, Copy, Debug, Default)]
pub struct PyramidExtractor;

fn pool2(x: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = x.dim();
    Array3::from_shape_fn((h / 2, w / 2, c), |(r, col, k)| {
        (x[[2 * r, 2 * col, k]] + x[[2 * r + 1, 2 * col, k]] + x[[2 * r, 2 * col + 1, k]] + x[[2 * r + 1, 2 * col + 1, k]]) / 4.0
    })
}

impl FeatureExtractor for PyramidExtractor {
    fn features(&self, img: &Array3<f64>) -> Vec<Array3<f64>> {
        let half = pool2(img);
        let quarter = pool2(&half);
        vec![img.clone(), half, quarter]
    }
}

fn unit_channels(x: &Array3<f64>) -> Array3<f64> {
    let mut out = x.clone();
    for mut v in out.lanes_mut(Axis(2)) {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-10 {
            v.mapv_inplace(|a| a / n);
        }
    }
    out
}

/// Learned-perceptual-style distance: per layer, unit-normalize the channel
/// vector at every position, take the squared difference summed over
/// channels, average over positions, and combine layers with the
/// extractor's weights.
pub fn lpips(a: &Array3<f64>, b: &Array3<f64>, fx: &dyn FeatureExtractor) -> Result<f64> {
    same_shape(a, b)?;
    let fa = fx.features(a);
    let fb = fx.features(b);
    let weights = fx.layer_weights(fa.len());
    let mut d = 0.0;
    for ((la, lb), wgt) in fa.iter().zip(&fb).zip(weights) {
        let (na, nb) = (unit_channels(la), unit_channels(lb));
        let (h, w, _) = na.dim();
        let sq: f64 = na.iter().zip(nb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        d += wgt * sq / (h * w) as f64;
    }
    Ok(d)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Identity drift across a clip: the mean over frames `t >= 2` of the
/// average cosine similarity of frame `t`'s descriptor to the first frame
/// and to the previous frame.
pub fn subject_consistency(frames: &[Array3<f64>], fx: &dyn FeatureExtractor) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "subject consistency needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let desc: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| fx.features(f).iter().flat_map(|l| l.iter().copied()).collect())
        .collect();
    let n = desc.len();
    let s: f64 = (1..n).map(|t| 0.5 * (cosine(&desc[0], &desc[t]) + cosine(&desc[t - 1], &desc[t]))).sum();
    Ok(s / (n - 1) as f64)
}
