use super::gemm::{gemm, MatRef};
use super::{Element, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Element>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src[oy * g.wo..(oy + 1) * g.wo].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            drow[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Element> Tensor<T> {
    /// 2-D cross-correlation of `[N, Cin, H, W]` with `w: [Cout, Cin, kh, kw]`,
    /// symmetric zero padding and equal strides.
    pub fn conv2d(&self, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Tensor<T> {
        let &[n, cin, h, wd] = self.shape() else {
            panic!("conv2d input must be NCHW, got {:?}", self.shape());
        };
        let &[cout, wcin, kh, kw] = w.shape() else {
            panic!("conv2d weight must be [Cout, Cin, kh, kw], got {:?}", w.shape());
        };
        assert_eq!(cin, wcin, "conv2d channel mismatch: input {:?}, weight {:?}", self.shape(), w.shape());
        assert!(stride >= 1, "conv2d stride must be positive");
        assert!(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d kernel larger than padded input");
        if let Some(b) = b {
            assert_eq!(b.shape(), &[cout], "conv2d bias shape mismatch");
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let g = Geometry {
            cin,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        };
        let (k, p) = (g.k(), g.p());
        let in_sz = cin * h * wd;
        let mut out = vec![T::zero(); n * cout * p];
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
        for i in 0..n {
            let xi = &self.data()[i * in_sz..(i + 1) * in_sz];
            let oi = &mut out[i * cout * p..(i + 1) * cout * p];
            if let Some(b) = b {
                for (row, &bv) in oi.chunks_mut(p).zip(b.data()) {
                    row.fill(bv);
                }
            }
            let colv = if g.is_pointwise() {
                xi
            } else {
                im2col(xi, &g, &mut cols);
                &cols[..]
            };
            gemm(
                MatRef::rm(w.data(), cout, k),
                MatRef::rm(colv, k, p),
                if b.is_some() { T::one() } else { T::zero() },
                oi,
            );
        }
        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = b {
            parents.push(b.clone());
        }
        let (x, wt) = (self.clone(), w.clone());
        Tensor::from_op(out, vec![n, cout, ho, wo], parents, move |gout, need| {
            let mut dx = need[0].then(|| vec![T::zero(); n * in_sz]);
            let mut dw = need[1].then(|| vec![T::zero(); cout * k]);
            let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
            let mut dcols = if g.is_pointwise() || dx.is_none() { Vec::new() } else { vec![T::zero(); k * p] };
            for i in 0..n {
                let gi = MatRef::rm(&gout[i * cout * p..(i + 1) * cout * p], cout, p);
                if let Some(dw) = dw.as_mut() {
                    let xi = &x.data()[i * in_sz..(i + 1) * in_sz];
                    let colv = if g.is_pointwise() {
                        xi
                    } else {
                        im2col(xi, &g, &mut cols);
                        &cols[..]
                    };
                    gemm(gi, MatRef::rm_t(colv, k, p), T::one(), dw);
                }
                if let Some(dx) = dx.as_mut() {
                    let dxi = &mut dx[i * in_sz..(i + 1) * in_sz];
                    if g.is_pointwise() {
                        gemm(MatRef::rm_t(wt.data(), cout, k), gi, T::zero(), dxi);
                    } else {
                        gemm(MatRef::rm_t(wt.data(), cout, k), gi, T::zero(), &mut dcols);
                        col2im(&dcols, &g, dxi);
                    }
                }
            }
            let mut outs = vec![dx, dw];
            if need.len() == 3 {
                outs.push(need[2].then(|| {
                    let mut db = vec![T::zero(); cout];
                    for i in 0..n {
                        for (c, d) in db.iter_mut().enumerate() {
                            let base = (i * cout + c) * p;
                            *d += gout[base..base + p].iter().fold(T::zero(), |a, &b| a + b);
                        }
                    }
                    db
                }));
            }
            outs
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_gradients, pseudo_random};
    use super::*;

    fn naive_conv(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], stride: usize, pad: usize) -> Vec<f64> {
        let [n, cin, h, wd] = xs;
        let [cout, _, kh, kw] = ws;
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; n * cout * ho * wo];
        for b in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x[((b * cin + ci) * h + iy as usize) * wd + ix as usize]
                                            * w[((co * cin + ci) * kh + ki) * kw + kj];
                                    }
                                }
                            }
                        }
                        out[((b * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_loops() {
        for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 2)] {
            let xs = [2, 3, 6, 6];
            let ws = [4, 3, k, k];
            let x = pseudo_random(xs.iter().product(), 11);
            let w = pseudo_random(ws.iter().product(), 12);
            let got = Tensor::from_vec(x.clone(), &xs).conv2d(&Tensor::from_vec(w.clone(), &ws), None, stride, pad);
            let want = naive_conv(&x, xs, &w, ws, stride, pad);
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 1)] {
            check_gradients(
                &[
                    (pseudo_random(2 * 2 * 5 * 5, 21), vec![2, 2, 5, 5]),
                    (pseudo_random(3 * 2 * k * k, 22), vec![3, 2, k, k]),
                    (pseudo_random(3, 23), vec![3]),
                ],
                |t| t[0].conv2d(&t[1], Some(&t[2]), stride, pad).silu().sqr().mean_all(),
                1e-6,
            );
        }
    }
}
