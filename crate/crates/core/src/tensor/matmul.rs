use super::gemm::{gemm, MatRef};
use super::{Element, Tensor};

impl<'a, T> MatRef<'a, T> {
    fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

fn split_batch(shape: &[usize]) -> (usize, usize, usize) {
    match *shape {
        [r, c] => (1, r, c),
        [b, r, c] => (b, r, c),
        _ => panic!("matmul expects rank 2 or 3, got {shape:?}"),
    }
}

impl<T: Element> Tensor<T> {
    /// Batched matrix product `op(self) * op(other)` over `[B, rows, cols]`
    /// operands (rank 2 means B = 1). `ta`/`tb` read the stored matrices
    /// transposed.
    pub fn matmul_t(&self, other: &Tensor<T>, ta: bool, tb: bool) -> Tensor<T> {
        let (ba, ra, ca) = split_batch(self.shape());
        let (bb, rb, cb) = split_batch(other.shape());
        assert_eq!(ba, bb, "matmul batch mismatch {:?} vs {:?}", self.shape(), other.shape());
        let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
        let (k2, n) = if tb { (cb, rb) } else { (rb, cb) };
        assert_eq!(k, k2, "matmul inner mismatch {:?} x {:?} (ta={ta}, tb={tb})", self.shape(), other.shape());
        let batch = ba;
        let (sa, sb) = (ra * ca, rb * cb);
        let mut data = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                MatRef::maybe_t(&self.data()[i * sa..(i + 1) * sa], m, k, ta),
                MatRef::maybe_t(&other.data()[i * sb..(i + 1) * sb], k, n, tb),
                T::zero(),
                &mut data[i * m * n..(i + 1) * m * n],
            );
        }
        let shape = if self.ndim() == 3 { vec![batch, m, n] } else { vec![m, n] };
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(data, shape, vec![self.clone(), other.clone()], move |g, need| {
            let da = need[0].then(|| {
                let mut da = vec![T::zero(); batch * sa];
                for i in 0..batch {
                    let gi = MatRef::rm(&g[i * m * n..(i + 1) * m * n], m, n);
                    let opb = MatRef::maybe_t(&b.data()[i * sb..(i + 1) * sb], k, n, tb);
                    let out = &mut da[i * sa..(i + 1) * sa];
                    if ta {
                        // stored A is [k, m]: dA = op(B) * dC^T
                        gemm(opb, gi.t(), T::zero(), out);
                    } else {
                        gemm(gi, opb.t(), T::zero(), out);
                    }
                }
                da
            });
            let db = need[1].then(|| {
                let mut db = vec![T::zero(); batch * sb];
                for i in 0..batch {
                    let gi = MatRef::rm(&g[i * m * n..(i + 1) * m * n], m, n);
                    let opa = MatRef::maybe_t(&a.data()[i * sa..(i + 1) * sa], m, k, ta);
                    let out = &mut db[i * sb..(i + 1) * sb];
                    if tb {
                        // stored B is [n, k]: dB = dC^T * op(A)
                        gemm(gi.t(), opa, T::zero(), out);
                    } else {
                        gemm(opa.t(), gi, T::zero(), out);
                    }
                }
                db
            });
            vec![da, db]
        })
    }

    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        self.matmul_t(other, false, false)
    }

    /// Affine map over the last axis: `x * w^T + b` with `w: [out, in]`.
    pub fn linear(&self, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
        let &[out_f, in_f] = w.shape() else {
            panic!("linear weight must be [out, in], got {:?}", w.shape());
        };
        assert_eq!(
            *self.shape().last().expect("linear on a scalar"),
            in_f,
            "linear input width mismatch: {:?} vs weight {:?}",
            self.shape(),
            w.shape()
        );
        if let Some(b) = b {
            assert_eq!(b.shape(), &[out_f], "linear bias shape mismatch");
        }
        let rows = self.numel() / in_f;
        let mut data = vec![T::zero(); rows * out_f];
        if let Some(b) = b {
            for row in data.chunks_mut(out_f) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(
            MatRef::rm(self.data(), rows, in_f),
            MatRef::rm_t(w.data(), out_f, in_f),
            if b.is_some() { T::one() } else { T::zero() },
            &mut data,
        );
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = out_f;
        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = b {
            parents.push(b.clone());
        }
        let (x, wt) = (self.clone(), w.clone());
        Tensor::from_op(data, shape, parents, move |g, need| {
            let gm = MatRef::rm(g, rows, out_f);
            let dx = need[0].then(|| {
                let mut dx = vec![T::zero(); rows * in_f];
                gemm(gm, MatRef::rm(wt.data(), out_f, in_f), T::zero(), &mut dx);
                dx
            });
            let dw = need[1].then(|| {
                let mut dw = vec![T::zero(); out_f * in_f];
                gemm(gm.t(), MatRef::rm(x.data(), rows, in_f), T::zero(), &mut dw);
                dw
            });
            let mut outs = vec![dx, dw];
            if need.len() == 3 {
                outs.push(need[2].then(|| {
                    let mut db = vec![T::zero(); out_f];
                    for row in g.chunks(out_f) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += *v;
                        }
                    }
                    db
                }));
            }
            outs
        })
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Tensor<T> {
        let n = *self.shape().last().expect("softmax on a scalar");
        let mut data = self.to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            let inv = T::one() / sum;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let y = data.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let mut dx = vec![T::zero(); y.len()];
            for ((dxr, yr), gr) in dx.chunks_mut(n).zip(y.chunks(n)).zip(g.chunks(n)) {
                let dot = yr.iter().zip(gr).fold(T::zero(), |a, (&y, &g)| a + y * g);
                for ((d, &y), &g) in dxr.iter_mut().zip(yr).zip(gr) {
                    *d = y * (g - dot);
                }
            }
            vec![Some(dx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_gradients, pseudo_random};
    use super::*;

    #[test]
    fn matmul_gradients_all_transpose_modes() {
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a_shape = if ta { vec![2, 4, 3] } else { vec![2, 3, 4] };
            let b_shape = if tb { vec![2, 5, 4] } else { vec![2, 4, 5] };
            check_gradients(
                &[(pseudo_random(24, 1), a_shape), (pseudo_random(40, 2), b_shape)],
                |t| t[0].matmul_t(&t[1], ta, tb).softmax_last().sqr().sum_all(),
                1e-6,
            );
        }
    }

    #[test]
    fn linear_gradients() {
        check_gradients(
            &[
                (pseudo_random(2 * 3 * 4, 3), vec![2, 3, 4]),
                (pseudo_random(5 * 4, 4), vec![5, 4]),
                (pseudo_random(5, 5), vec![5]),
            ],
            |t| t[0].linear(&t[1], Some(&t[2])).silu().mean_all(),
            1e-6,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::<f64>::from_vec(pseudo_random(12, 9).iter().map(|v| v * 30.0).collect(), &[3, 4]);
        for row in x.softmax_last().data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
