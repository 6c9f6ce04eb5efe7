//! A small reverse-mode automatic differentiation engine over dense,
//! row-major tensors.
//!
//! Every operation produces a new [`Tensor`]. When at least one input
//! requires a gradient, the result records its parents and a backward
//! closure; otherwise nothing is recorded, so inference pays no tape cost.
//! Matrix products and convolutions are lowered onto `matrixmultiply`.
//!
//! Shape errors inside this module are programming errors and panic with a
//! descriptive message, in the same spirit as `ndarray`. Public model entry
//! points validate shapes before reaching here.

mod conv;
mod elementwise;
mod gemm;
mod layout;
mod matmul;
mod norm;

use std::collections::HashMap;
use std::fmt;
use std::ops::{AddAssign, MulAssign};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

pub use gemm::gemm;

/// Scalar types the engine can compute in.
pub trait Element:
    num_traits::Float
    + num_traits::FromPrimitive
    + AddAssign
    + MulAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` with explicit row/column strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing (for `c`) memory.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn to_f64_lossless(self) -> f64;

    fn to_f32_lossy(self) -> f32;
}

impl Element for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Element for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>>;

struct GradNode<T: Element> {
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Inner<T: Element> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<T>,
    node: Option<GradNode<T>>,
    leaf: bool,
}

/// Reference-counted tensor handle. Cloning is cheap.
pub struct Tensor<T: Element>(Rc<Inner<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, node: Option<GradNode<T>>, leaf: bool) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor(Rc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            node,
            leaf,
        }))
    }

    /// A constant: never receives a gradient.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), data, None, false)
    }

    /// A trainable leaf whose gradient is reported by [`Tensor::backward`].
    pub fn param(data: Vec<T>, shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), data, None, true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(vec![T::zero(); numel(shape)], shape)
    }

    pub fn full(value: T, shape: &[usize]) -> Self {
        Self::from_vec(vec![value; numel(shape)], shape)
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(vec![value], &[])
    }

    pub fn from_f64_slice(data: &[f64], shape: &[usize]) -> Self {
        Self::from_vec(data.iter().map(|&v| T::lit(v)).collect(), shape)
    }

    /// Builds an op result, recording the backward closure only when some
    /// parent participates in differentiation.
    pub(crate) fn from_op<F>(data: Vec<T>, shape: Vec<usize>, parents: Vec<Tensor<T>>, backward: F) -> Self
    where
        F: Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + 'static,
    {
        let node = if parents.iter().any(Tensor::requires_grad) {
            Some(GradNode {
                parents,
                backward: Box::new(backward),
            })
        } else {
            None
        };
        Self::build(shape, data, node, false)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.leaf || self.0.node.is_some()
    }

    pub fn is_param(&self) -> bool {
        self.0.leaf
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::from_vec(self.to_vec(), self.shape())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| (*a - *b).abs().to_f64_lossless())
            .fold(0.0, f64::max)
    }

    /// Reverse-mode sweep from a scalar. Returns gradients of every
    /// trainable leaf reachable from `self`.
    pub fn backward(&self) -> Gradients<T> {
        assert_eq!(self.numel(), 1, "backward() requires a scalar, got {:?}", self.shape());
        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        let mut leaves = HashMap::new();
        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            if let Some(node) = &t.0.node {
                let needs: Vec<bool> = node.parents.iter().map(Tensor::requires_grad).collect();
                let outs = (node.backward)(&grad, &needs);
                debug_assert_eq!(outs.len(), node.parents.len());
                for ((parent, out), need) in node.parents.iter().zip(outs).zip(needs) {
                    let (Some(g), true) = (out, need) else {
                        continue;
                    };
                    debug_assert_eq!(g.len(), parent.numel());
                    match pending.get_mut(&parent.id()) {
                        Some(acc) => {
                            for (a, v) in acc.iter_mut().zip(&g) {
                                *a += *v;
                            }
                        }
                        None => {
                            pending.insert(parent.id(), g);
                        }
                    }
                }
            }
            if t.0.leaf {
                leaves.insert(t.id(), grad);
            }
        }
        Gradients { grads: leaves }
    }

    /// Post-order over the differentiable subgraph (parents before children).
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

/// Gradients of trainable leaves, keyed by tensor identity.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    grads: HashMap<usize, Vec<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&t.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Central finite-difference gradient of `f` with respect to every
    /// element of the inputs, compared against the analytic gradient.
    pub fn check_gradients<F>(inputs: &[(Vec<f64>, Vec<usize>)], f: F, tol: f64)
    where
        F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
    {
        let params: Vec<Tensor<f64>> = inputs.iter().map(|(d, s)| Tensor::param(d.clone(), s)).collect();
        let loss = f(&params);
        let grads = loss.backward();
        let h = 1e-5;
        for (pi, (data, shape)) in inputs.iter().enumerate() {
            let analytic = grads.get(&params[pi]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; data.len()]);
            for i in 0..data.len() {
                let eval = |delta: f64| {
                    let ts: Vec<Tensor<f64>> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, (d, s))| {
                            let mut d = d.clone();
                            if j == pi {
                                d[i] += delta;
                            }
                            Tensor::from_vec(d, s)
                        })
                        .collect();
                    f(&ts).item()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[i];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    err < tol,
                    "input {pi} {shape:?} element {i}: analytic {a} vs finite difference {fd}"
                );
            }
        }
    }

    pub fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_do_not_record_graph() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[2]);
        let b = a.add(&a);
        assert!(!b.requires_grad());
    }

    #[test]
    fn shared_parent_accumulates() {
        let a = Tensor::<f64>::param(vec![3.0], &[1]);
        // a*a + a => d/da = 2a + 1
        let y = a.mul(&a).add(&a).sum_all();
        let g = y.backward();
        assert_eq!(g.get(&a).unwrap(), &[7.0]);
    }

    #[test]
    fn leaf_without_path_has_no_gradient() {
        let a = Tensor::<f64>::param(vec![1.0], &[1]);
        let b = Tensor::<f64>::param(vec![2.0], &[1]);
        let g = a.sqr().sum_all().backward();
        assert!(g.get(&b).is_none());
        assert_eq!(g.len(), 1);
    }
}
