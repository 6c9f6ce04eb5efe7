use std::collections::BTreeMap;

use crate::nets::{OptimizerState, ParameterArchive};

/// Adam with global-norm gradient clipping. Moments are `f32`, like the
/// parameters, so a checkpointed run resumes bit-exactly.
#[derive(Clone, Copy, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: 1.0 }
    }

    /// Applies one update to the named tensors in `grads` and returns the
    /// pre-clip gradient norm.
    pub fn step(&self, archive: &mut ParameterArchive, grads: &BTreeMap<String, Vec<f32>>, state: &mut OptimizerState) -> f64 {
        let norm = grads
            .values()
            .flat_map(|g| g.iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        let scale = if norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for (name, g) in grads {
            let p = archive.tensors.get_mut(name).expect("gradient for a known parameter");
            let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                let gi = g[i] * scale as f32;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] as f64 / bc1;
                let vh = v[i] as f64 / bc2;
                p.data[i] -= (self.lr * mh / (vh.sqrt() + self.eps)) as f32;
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = RunConfig::micro();
        let mut a = ParameterArchive::init(&cfg, 1);
        let name = "pose_guider.proj.bias".to_string();
        let before = a.tensors[&name].data.clone();
        let n = before.len();
        let g: Vec<f32> = (0..n).map(|i| if i % 2 == 0 { 0.01 } else { -0.02 }).collect();
        let mut st = OptimizerState::default();
        Adam::new(0.1).step(&mut a, &BTreeMap::from([(name.clone(), g.clone())]), &mut st);
        for i in 0..n {
            let d = a.tensors[&name].data[i] - before[i];
            assert!((d + 0.1 * g[i].signum()).abs() < 1e-5, "{d}");
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = RunConfig::micro();
        let mut a = ParameterArchive::init(&cfg, 1);
        let name = "embedder.proj.bias".to_string();
        let mut st = OptimizerState::default();
        let opt = Adam::new(0.05);
        for _ in 0..400 {
            let g: Vec<f32> = a.tensors[&name].data.iter().map(|&x| 2.0 * (x - 3.0)).collect();
            opt.step(&mut a, &BTreeMap::from([(name.clone(), g)]), &mut st);
        }
        assert!(a.tensors[&name].data.iter().all(|&x| (x - 3.0).abs() < 0.05));
    }
}
