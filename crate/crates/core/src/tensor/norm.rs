use super::{Element, Tensor};

/// Normalizes independent contiguous segments, then applies a per-channel
/// affine map. `channel_of(segment, offset)` gives the affine index.
struct Segments {
    count: usize,
    len: usize,
}

fn normalize<T: Element>(x: &[T], seg: &Segments, eps: T) -> (Vec<T>, Vec<T>) {
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(seg.count);
    let inv_n = T::one() / T::from_usize(seg.len).unwrap();
    for s in 0..seg.count {
        let xs = &x[s * seg.len..(s + 1) * seg.len];
        let mean = xs.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
        let var = xs.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_n;
        let r = T::one() / (var + eps).sqrt();
        for (h, &v) in xhat[s * seg.len..(s + 1) * seg.len].iter_mut().zip(xs) {
            *h = (v - mean) * r;
        }
        rstd.push(r);
    }
    (xhat, rstd)
}

/// dx for y = xhat given dxhat, per segment.
fn normalize_backward<T: Element>(dxhat: &[T], xhat: &[T], rstd: &[T], seg: &Segments) -> Vec<T> {
    let mut dx = vec![T::zero(); dxhat.len()];
    let inv_n = T::one() / T::from_usize(seg.len).unwrap();
    for s in 0..seg.count {
        let r = s * seg.len..(s + 1) * seg.len;
        let (dh, xh) = (&dxhat[r.clone()], &xhat[r.clone()]);
        let mean_dh = dh.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
        let mean_dhx = dh.iter().zip(xh).fold(T::zero(), |a, (&d, &x)| a + d * x) * inv_n;
        for ((o, &d), &x) in dx[r].iter_mut().zip(dh).zip(xh) {
            *o = rstd[s] * (d - mean_dh - x * mean_dhx);
        }
    }
    dx
}

impl<T: Element> Tensor<T> {
    /// Group normalization of `[N, C, H, W]` with per-channel scale and shift.
    pub fn group_norm(&self, groups: usize, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Tensor<T> {
        let &[n, c, h, w] = self.shape() else {
            panic!("group_norm expects NCHW, got {:?}", self.shape());
        };
        assert!(groups > 0 && c % groups == 0, "group_norm: {c} channels not divisible by {groups} groups");
        assert_eq!(gamma.shape(), &[c], "group_norm gamma shape");
        assert_eq!(beta.shape(), &[c], "group_norm beta shape");
        let hw = h * w;
        let seg = Segments {
            count: n * groups,
            len: (c / groups) * hw,
        };
        let (xhat, rstd) = normalize(self.data(), &seg, T::lit(eps));
        let mut data = xhat.clone();
        for (p, chunk) in data.chunks_mut(hw).enumerate() {
            let ch = p % c;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for v in chunk {
                *v = *v * g + b;
            }
        }
        let gm = gamma.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), gamma.clone(), beta.clone()], move |g, need| {
            let dgamma = need[1].then(|| {
                let mut d = vec![T::zero(); c];
                for (p, (gc, xc)) in g.chunks(hw).zip(xhat.chunks(hw)).enumerate() {
                    d[p % c] += gc.iter().zip(xc).fold(T::zero(), |a, (&g, &x)| a + g * x);
                }
                d
            });
            let dbeta = need[2].then(|| {
                let mut d = vec![T::zero(); c];
                for (p, gc) in g.chunks(hw).enumerate() {
                    d[p % c] += gc.iter().fold(T::zero(), |a, &b| a + b);
                }
                d
            });
            let dx = need[0].then(|| {
                let mut dxhat = g.to_vec();
                for (p, chunk) in dxhat.chunks_mut(hw).enumerate() {
                    let gv = gm.data()[p % c];
                    for v in chunk {
                        *v *= gv;
                    }
                }
                normalize_backward(&dxhat, &xhat, &rstd, &seg)
            });
            vec![dx, dgamma, dbeta]
        })
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Tensor<T> {
        let c = *self.shape().last().expect("layer_norm on a scalar");
        assert_eq!(gamma.shape(), &[c], "layer_norm gamma shape");
        assert_eq!(beta.shape(), &[c], "layer_norm beta shape");
        let seg = Segments {
            count: self.numel() / c,
            len: c,
        };
        let (xhat, rstd) = normalize(self.data(), &seg, T::lit(eps));
        let mut data = xhat.clone();
        for row in data.chunks_mut(c) {
            for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
                *v = *v * g + b;
            }
        }
        let gm = gamma.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), gamma.clone(), beta.clone()], move |g, need| {
            let dgamma = need[1].then(|| {
                let mut d = vec![T::zero(); c];
                for (gr, xr) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ((d, &g), &x) in d.iter_mut().zip(gr).zip(xr) {
                        *d += g * x;
                    }
                }
                d
            });
            let dbeta = need[2].then(|| {
                let mut d = vec![T::zero(); c];
                for gr in g.chunks(c) {
                    for (d, &g) in d.iter_mut().zip(gr) {
                        *d += g;
                    }
                }
                d
            });
            let dx = need[0].then(|| {
                let mut dxhat = g.to_vec();
                for row in dxhat.chunks_mut(c) {
                    for (v, &gv) in row.iter_mut().zip(gm.data()) {
                        *v *= gv;
                    }
                }
                normalize_backward(&dxhat, &xhat, &rstd, &seg)
            });
            vec![dx, dgamma, dbeta]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_gradients, pseudo_random};
    use super::*;

    #[test]
    fn group_norm_gradients() {
        check_gradients(
            &[
                (pseudo_random(2 * 4 * 3 * 3, 31), vec![2, 4, 3, 3]),
                (pseudo_random(4, 32), vec![4]),
                (pseudo_random(4, 33), vec![4]),
                (pseudo_random(2 * 4 * 3 * 3, 34), vec![2, 4, 3, 3]),
            ],
            |t| t[0].group_norm(2, &t[1], &t[2], 1e-5).mul(&t[3]).sum_all(),
            1e-5,
        );
    }

    #[test]
    fn layer_norm_gradients() {
        check_gradients(
            &[
                (pseudo_random(3 * 5, 41), vec![3, 5]),
                (pseudo_random(5, 42), vec![5]),
                (pseudo_random(5, 43), vec![5]),
                (pseudo_random(3 * 5, 44), vec![3, 5]),
            ],
            |t| t[0].layer_norm(&t[1], &t[2], 1e-5).mul(&t[3]).sum_all(),
            1e-5,
        );
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let x = Tensor::<f64>::from_vec(pseudo_random(8, 5), &[1, 8]);
        let y = x.layer_norm(&Tensor::full(1.0, &[8]), &Tensor::zeros(&[8]), 0.0);
        let mean: f64 = y.data().iter().sum::<f64>() / 8.0;
        let var: f64 = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}
