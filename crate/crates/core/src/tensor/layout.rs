use super::{numel, Element, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (with `shape`) into the axis order `axes`.
fn permute_data<T: Copy + Default>(src: &[T], shape: &[usize], axes: &[usize]) -> (Vec<T>, Vec<usize>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = src.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return (out, out_shape);
    }
    let nd = out_shape.len();
    let last = nd - 1;
    let inner = out_shape[last];
    let inner_stride = src_strides[last];
    let mut idx = vec![0usize; nd];
    let mut base = 0usize;
    loop {
        if inner_stride == 1 {
            out.extend_from_slice(&src[base..base + inner]);
        } else {
            for j in 0..inner {
                out.push(src[base + j * inner_stride]);
            }
        }
        // advance the outer index (all but the last axis)
        let mut ax = last;
        loop {
            if ax == 0 {
                return (out, out_shape);
            }
            ax -= 1;
            idx[ax] += 1;
            base += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

impl<T: Element> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        assert_eq!(
            numel(shape),
            self.numel(),
            "reshape {:?} -> {:?} changes element count",
            self.shape(),
            shape
        );
        Tensor::from_op(self.to_vec(), shape.to_vec(), vec![self.clone()], |g, _| vec![Some(g.to_vec())])
    }

    pub fn permute(&self, axes: &[usize]) -> Tensor<T> {
        assert_eq!(axes.len(), self.ndim(), "permute rank mismatch");
        let mut seen = vec![false; axes.len()];
        for &a in axes {
            assert!(a < axes.len() && !seen[a], "permute axes {axes:?} invalid");
            seen[a] = true;
        }
        let (data, out_shape) = permute_data(self.data(), self.shape(), axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let out_shape_c = out_shape.clone();
        Tensor::from_op(data, out_shape, vec![self.clone()], move |g, _| {
            vec![Some(permute_data(g, &out_shape_c, &inverse).0)]
        })
    }

    /// Concatenation along `axis`. All other dimensions must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape();
        for p in parts {
            assert_eq!(p.ndim(), first.len(), "concat rank mismatch");
            for (i, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "concat shape mismatch {:?} vs {:?}", p.shape(), first);
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.dim(axis) * inner).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.to_vec();
        shape[axis] = parts.iter().map(|p| p.dim(axis)).sum();
        let parents: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op(data, shape, parents, move |g, need| {
            let mut outs: Vec<Option<Vec<T>>> = need
                .iter()
                .zip(&widths)
                .map(|(&n, &w)| n.then(|| Vec::with_capacity(outer * w)))
                .collect();
            for o in 0..outer {
                let mut off = o * total;
                for (out, &w) in outs.iter_mut().zip(&widths) {
                    if let Some(v) = out {
                        v.extend_from_slice(&g[off..off + w]);
                    }
                    off += w;
                }
            }
            outs
        })
    }

    /// The sub-range `start..start+len` of `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor<T> {
        let shape = self.shape();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis] * inner;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full + start * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let n_in = self.numel();
        Tensor::from_op(data, out_shape, vec![self.clone()], move |g, _| {
            let mut dx = vec![T::zero(); n_in];
            for o in 0..outer {
                let base = o * full + start * inner;
                dx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        })
    }

    /// Rows of axis 0 picked by `indices` (repeats allowed).
    pub fn index_select0(&self, indices: &[usize]) -> Tensor<T> {
        let rows = self.dim(0);
        let row = self.numel() / rows.max(1);
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            assert!(i < rows, "index_select0 index {i} out of range {rows}");
            data.extend_from_slice(&self.data()[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let indices = indices.to_vec();
        let n_in = self.numel();
        Tensor::from_op(data, shape, vec![self.clone()], move |g, _| {
            let mut dx = vec![T::zero(); n_in];
            for (k, &i) in indices.iter().enumerate() {
                for (d, v) in dx[i * row..(i + 1) * row].iter_mut().zip(&g[k * row..(k + 1) * row]) {
                    *d += *v;
                }
            }
            vec![Some(dx)]
        })
    }

    /// Nearest-neighbour 2x upsampling of `[N, C, H, W]`.
    pub fn upsample_nearest2x(&self) -> Tensor<T> {
        let &[n, c, h, w] = self.shape() else {
            panic!("upsample_nearest2x expects NCHW, got {:?}", self.shape());
        };
        let (h2, w2) = (2 * h, 2 * w);
        let mut data = vec![T::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut data[p * h2 * w2..(p + 1) * h2 * w2];
            for y in 0..h2 {
                let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
                for (x, d) in dst[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                    *d = srow[x / 2];
                }
            }
        }
        Tensor::from_op(data, vec![n, c, h2, w2], vec![self.clone()], move |g, _| {
            let mut dx = vec![T::zero(); n * c * h * w];
            for p in 0..n * c {
                let gp = &g[p * h2 * w2..(p + 1) * h2 * w2];
                let dp = &mut dx[p * h * w..(p + 1) * h * w];
                for y in 0..h2 {
                    for x in 0..w2 {
                        dp[(y / 2) * w + x / 2] += gp[y * w2 + x];
                    }
                }
            }
            vec![Some(dx)]
        })
    }

    /// Adds a per-sample channel vector `[N, C]` to `[N, C, H, W]`.
    pub fn add_channel(&self, e: &Tensor<T>) -> Tensor<T> {
        let &[n, c, h, w] = self.shape() else {
            panic!("add_channel expects NCHW, got {:?}", self.shape());
        };
        assert_eq!(e.shape(), &[n, c], "add_channel vector shape mismatch");
        let hw = h * w;
        let mut data = self.to_vec();
        for (p, chunk) in data.chunks_mut(hw).enumerate() {
            let v = e.data()[p];
            for d in chunk {
                *d += v;
            }
        }
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), e.clone()], move |g, need| {
            let de = need[1].then(|| g.chunks(hw).map(|ch| ch.iter().fold(T::zero(), |a, &b| a + b)).collect());
            vec![Some(g.to_vec()), de]
        })
    }

    /// Mean over the spatial axes of `[N, C, H, W]`, giving `[N, C]`.
    pub fn mean_spatial(&self) -> Tensor<T> {
        let &[n, c, h, w] = self.shape() else {
            panic!("mean_spatial expects NCHW, got {:?}", self.shape());
        };
        let hw = h * w;
        let inv = T::lit(1.0 / hw as f64);
        let data = self
            .data()
            .chunks(hw)
            .map(|ch| ch.iter().fold(T::zero(), |a, &b| a + b) * inv)
            .collect();
        Tensor::from_op(data, vec![n, c], vec![self.clone()], move |g, _| {
            let mut dx = Vec::with_capacity(n * c * hw);
            for &v in g {
                dx.extend(std::iter::repeat_n(v * inv, hw));
            }
            vec![Some(dx)]
        })
    }
}
