//! Conversion between `(H, W, C)` pixel arrays in `[0, 1]` and network
//! tensors `[N, 3, H, W]` in `[-1, 1]`.

use ndarray::Array3;

use crate::dataset::{composite_background, WHITE};
use crate::tensor::{Element, Tensor};

/// RGBA inputs are composited over white first.
pub fn images_to_tensor<T: Element>(images: &[&Array3<f64>]) -> Tensor<T> {
    assert!(!images.is_empty(), "no images to convert");
    let (h, w, _) = images[0].dim();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        assert_eq!((img.dim().0, img.dim().1), (h, w), "images differ in size");
        let rgb = composite_background(img, WHITE);
        for k in 0..3 {
            for r in 0..h {
                for c in 0..w {
                    data.push(T::lit(rgb[[r, c, k]] * 2.0 - 1.0));
                }
            }
        }
    }
    Tensor::from_vec(data, &[images.len(), 3, h, w])
}

/// Inverse of [`images_to_tensor`], clamped to `[0, 1]`.
pub fn tensor_to_images<T: Element>(t: &Tensor<T>) -> Vec<Array3<f64>> {
    let &[n, c, h, w] = t.shape() else {
        panic!("expected [N, C, H, W], got {:?}", t.shape());
    };
    let d = t.data();
    (0..n)
        .map(|i| {
            Array3::from_shape_fn((h, w, c), |(r, col, k)| {
                let v = d[((i * c + k) * h + r) * w + col].to_f64_lossless();
                ((v + 1.0) * 0.5).clamp(0.0, 1.0)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let img = Array3::from_shape_fn((2, 3, 3), |(r, c, k)| (r * 9 + c * 3 + k) as f64 / 20.0);
        let t = images_to_tensor::<f64>(&[&img]);
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        assert!((t.data()[1] - (3.0 / 20.0 * 2.0 - 1.0)).abs() < 1e-15);
        let back = &tensor_to_images(&t)[0];
        assert!(back.iter().zip(img.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
