//! Building blocks shared by the networks.

use super::params::{Params, SpecSink};
use crate::tensor::{Element, Tensor};

pub const NORM_EPS: f64 = 1e-5;

pub fn conv<T: Element>(p: &Params<T>, name: &str, x: &Tensor<T>, stride: usize) -> Tensor<T> {
    let w = p.get(&format!("{name}.weight"));
    let k = w.dim(2);
    x.conv2d(w, Some(p.get(&format!("{name}.bias"))), stride, k / 2)
}

pub fn linear<T: Element>(p: &Params<T>, name: &str, x: &Tensor<T>) -> Tensor<T> {
    let bias = format!("{name}.bias");
    let b = p.contains(&bias).then(|| p.get(&bias));
    x.linear(p.get(&format!("{name}.weight")), b)
}

pub fn group_norm<T: Element>(p: &Params<T>, name: &str, x: &Tensor<T>, groups: usize) -> Tensor<T> {
    x.group_norm(groups, p.get(&format!("{name}.gamma")), p.get(&format!("{name}.beta")), NORM_EPS)
}

pub fn layer_norm<T: Element>(p: &Params<T>, name: &str, x: &Tensor<T>) -> Tensor<T> {
    x.layer_norm(p.get(&format!("{name}.gamma")), p.get(&format!("{name}.beta")), NORM_EPS)
}

/// Sinusoidal embedding of positions, `[len(positions), dim]`: the first
/// half holds sines, the second cosines, with geometric frequencies.
pub fn sinusoidal<T: Element>(positions: &[f64], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut out = vec![0.0; positions.len() * dim];
    for (i, &pos) in positions.iter().enumerate() {
        for j in 0..half {
            let freq = (-(10000f64.ln()) * j as f64 / half.max(1) as f64).exp();
            out[i * dim + j] = (pos * freq).sin();
            out[i * dim + half + j] = (pos * freq).cos();
        }
    }
    Tensor::from_f64_slice(&out, &[positions.len(), dim])
}

/// Residual block with a timestep-embedding injection.
pub struct ResBlock {
    pub cin: usize,
    pub cout: usize,
    pub temb: usize,
}

impl ResBlock {
    pub fn specs(&self, s: &mut SpecSink, name: &str) {
        s.norm(&format!("{name}.norm1"), self.cin);
        s.conv(&format!("{name}.conv1"), self.cin, self.cout, 3);
        s.linear(&format!("{name}.temb"), self.temb, self.cout, true);
        s.norm(&format!("{name}.norm2"), self.cout);
        s.conv(&format!("{name}.conv2"), self.cout, self.cout, 3);
        if self.cin != self.cout {
            s.conv(&format!("{name}.skip"), self.cin, self.cout, 1);
        }
    }

    /// `temb_act` is `silu(time embedding)`, `[N, temb]`.
    pub fn forward<T: Element>(&self, p: &Params<T>, name: &str, x: &Tensor<T>, temb_act: &Tensor<T>, groups: usize) -> Tensor<T> {
        let h = conv(p, &format!("{name}.conv1"), &group_norm(p, &format!("{name}.norm1"), x, groups).silu(), 1);
        let h = h.add_channel(&linear(p, &format!("{name}.temb"), temb_act));
        let h = conv(p, &format!("{name}.conv2"), &group_norm(p, &format!("{name}.norm2"), &h, groups).silu(), 1);
        let skip = if self.cin != self.cout {
            conv(p, &format!("{name}.skip"), x, 1)
        } else {
            x.clone()
        };
        skip.add(&h)
    }
}

/// `[N, C, H, W]` to `[N, H*W, C]`.
pub fn to_tokens<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let &[n, c, h, w] = x.shape() else {
        panic!("to_tokens expects NCHW");
    };
    x.permute(&[0, 2, 3, 1]).reshape(&[n, h * w, c])
}

/// `[N, H*W, C]` back to `[N, C, H, W]`.
pub fn from_tokens<T: Element>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let &[n, l, c] = t.shape() else {
        panic!("from_tokens expects [N, L, C]");
    };
    assert_eq!(l, h * w, "token count does not match spatial size");
    t.reshape(&[n, h, w, c]).permute(&[0, 3, 1, 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_position_zero() {
        let e = sinusoidal::<f64>(&[0.0, 3.0], 8);
        assert_eq!(&e.data()[..8], &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((e.data()[8] - 3.0f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn token_layout_round_trip() {
        let x = Tensor::<f64>::from_vec((0..24).map(|v| v as f64).collect(), &[1, 2, 3, 4]);
        let t = to_tokens(&x);
        assert_eq!(t.shape(), &[1, 12, 2]);
        assert_eq!(&t.data()[..4], &[0.0, 12.0, 1.0, 13.0]);
        assert_eq!(from_tokens(&t, 3, 4).data(), x.data());
    }
}
