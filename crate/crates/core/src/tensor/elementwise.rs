use super::{Element, Tensor};

fn same_shape<T: Element>(op: &str, a: &Tensor<T>, b: &Tensor<T>) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
}

fn silu<T: Element>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

fn silu_grad<T: Element>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape("add", self, other);
        let data = self.data().iter().zip(other.data()).map(|(a, b)| *a + *b).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, _| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape("sub", self, other);
        let data = self.data().iter().zip(other.data()).map(|(a, b)| *a - *b).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), other.clone()], |g, need| {
            vec![
                Some(g.to_vec()),
                need[1].then(|| g.iter().map(|v| -*v).collect()),
            ]
        })
    }

    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape("mul", self, other);
        let data = self.data().iter().zip(other.data()).map(|(a, b)| *a * *b).collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), other.clone()], move |g, need| {
            vec![
                need[0].then(|| g.iter().zip(b.data()).map(|(g, b)| *g * *b).collect()),
                need[1].then(|| g.iter().zip(a.data()).map(|(g, a)| *g * *a).collect()),
            ]
        })
    }

    pub fn scale(&self, s: f64) -> Tensor<T> {
        let s = T::lit(s);
        let data = self.data().iter().map(|v| *v * s).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().map(|v| *v * s).collect())]
        })
    }

    /// Adds `other`, whose shape must equal the trailing dimensions of
    /// `self`, to every leading block.
    pub fn add_trailing(&self, other: &Tensor<T>) -> Tensor<T> {
        let k = other.ndim();
        assert!(
            k <= self.ndim() && self.shape()[self.ndim() - k..] == *other.shape(),
            "add_trailing: {:?} is not a suffix of {:?}",
            other.shape(),
            self.shape()
        );
        let block = other.numel().max(1);
        let mut data = self.to_vec();
        for chunk in data.chunks_mut(block) {
            for (d, o) in chunk.iter_mut().zip(other.data()) {
                *d += *o;
            }
        }
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone(), other.clone()], move |g, need| {
            let go = need[1].then(|| {
                let mut acc = vec![T::zero(); block];
                for chunk in g.chunks(block) {
                    for (a, v) in acc.iter_mut().zip(chunk) {
                        *a += *v;
                    }
                }
                acc
            });
            vec![Some(g.to_vec()), go]
        })
    }

    pub fn silu(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| silu(v)).collect();
        let x = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().zip(x.data()).map(|(g, &x)| *g * silu_grad(x)).collect())]
        })
    }

    pub fn sqr(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * v).collect();
        let x = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let two = T::lit(2.0);
            vec![Some(g.iter().zip(x.data()).map(|(g, &x)| *g * two * x).collect())]
        })
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |a, &b| a + b);
        let n = self.numel();
        Tensor::from_op(vec![s], vec![], vec![self.clone()], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Mean of squared differences against `target`.
    pub fn mse(&self, target: &Tensor<T>) -> Tensor<T> {
        self.sub(target).sqr().mean_all()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_gradients, pseudo_random};
    use super::*;

    #[test]
    fn elementwise_gradients() {
        let a = pseudo_random(6, 1);
        let b = pseudo_random(6, 2);
        let c = pseudo_random(3, 3);
        check_gradients(
            &[(a, vec![2, 3]), (b, vec![2, 3]), (c, vec![3])],
            |t| {
                t[0].mul(&t[1])
                    .sub(&t[1].silu())
                    .add_trailing(&t[2])
                    .sqr()
                    .scale(0.5)
                    .add(&t[0])
                    .mean_all()
            },
            1e-6,
        );
    }

    #[test]
    fn silu_values() {
        let x = Tensor::<f64>::from_vec(vec![0.0, 1.0], &[2]).silu();
        assert_eq!(x.data()[0], 0.0);
        assert!((x.data()[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    }
}
