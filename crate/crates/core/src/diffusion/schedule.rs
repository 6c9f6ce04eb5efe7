use crate::config::DiffusionConfig;
use crate::error::{Error, Result};

/// Linear beta schedule and its cumulative products.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas_cumprod: Vec<f64>,
}

/// `beta_t` linear from `beta_start` (t = 0) to `beta_end` (t = T - 1).
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invariant("diffusion_steps_positive", "T = 0"));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invariant(
            "beta_bounds",
            format!("require 0 < beta_start <= beta_end < 1, got {beta_start} / {beta_end}"),
        ));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut acc = 1.0;
    let alphas_cumprod = betas
        .iter()
        .map(|b| {
            acc *= 1.0 - b;
            acc
        })
        .collect();
    Ok(NoiseSchedule { betas, alphas_cumprod })
}

impl NoiseSchedule {
    pub fn from_config(d: &DiffusionConfig) -> Result<Self> {
        make_schedule(d.steps, d.beta_start, d.beta_end)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `alpha_bar_t`, with `alpha_bar_{-1} = 1`.
    pub fn alpha_bar(&self, t: isize) -> f64 {
        if t < 0 {
            1.0
        } else {
            self.alphas_cumprod[t as usize]
        }
    }

    /// `sqrt(a) * x0 + sqrt(1 - a) * eps` with `a = alpha_bar_t`.
    pub fn q_sample(&self, x0: &[f64], t: isize, eps: &[f64]) -> Vec<f64> {
        let a = self.alpha_bar(t);
        let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
        x0.iter().zip(eps).map(|(x, e)| sa * x + sb * e).collect()
    }

    /// Descending `(t, t_prev)` pairs for `sampler_steps` evenly spaced
    /// timesteps `i * (T / S)`; the last pair ends at `-1`.
    pub fn ddim_pairs(&self, sampler_steps: usize) -> Vec<(isize, isize)> {
        let stride = (self.steps() / sampler_steps.max(1)).max(1);
        let ts: Vec<isize> = (0..sampler_steps.min(self.steps())).map(|i| (i * stride) as isize).collect();
        (0..ts.len()).rev().map(|i| (ts[i], if i == 0 { -1 } else { ts[i - 1] })).collect()
    }

    /// One DDIM update from `x_t` given predicted noise `eps`.
    ///
    /// `sigma = eta * sqrt((1 - a_p) / (1 - a_t)) * sqrt(1 - a_t / a_p)`;
    /// `z` supplies the fresh noise and is only read when `sigma > 0`.
    /// With `clip = Some(c)` the predicted `x0` is clamped to `[-c, c]` and
    /// the noise estimate re-derived from it, which keeps early high-noise
    /// steps from throwing the trajectory off the data range.
    #[allow(clippy::too_many_arguments)]
    pub fn ddim_step(
        &self,
        x_t: &[f64],
        eps: &[f64],
        t: isize,
        t_prev: isize,
        eta: f64,
        z: Option<&[f64]>,
        clip: Option<f64>,
    ) -> Vec<f64> {
        let (at, ap) = (self.alpha_bar(t), self.alpha_bar(t_prev));
        let sigma = eta * ((1.0 - ap) / (1.0 - at)).sqrt() * (1.0 - at / ap).max(0.0).sqrt();
        let dir = (1.0 - ap - sigma * sigma).max(0.0).sqrt();
        let (sat, sbt, sap) = (at.sqrt(), (1.0 - at).sqrt(), ap.sqrt());
        x_t.iter()
            .zip(eps)
            .enumerate()
            .map(|(i, (x, e))| {
                let mut x0 = (x - sbt * e) / sat;
                let mut e = *e;
                if let Some(c) = clip {
                    if x0.abs() > c {
                        x0 = x0.clamp(-c, c);
                        e = (x - sat * x0) / sbt;
                    }
                }
                let mut v = sap * x0 + dir * e;
                if sigma > 0.0 {
                    v += sigma * z.expect("stochastic DDIM step needs noise")[i];
                }
                v
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_monotone() {
        let s = make_schedule(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.betas[0], 1e-4);
        assert!((s.betas[999] - 0.02).abs() < 1e-15);
        assert!(s.alphas_cumprod.windows(2).all(|w| w[1] < w[0]));
        assert!((s.alphas_cumprod[0] - (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(10, 0.0, 0.02).is_err());
        assert!(make_schedule(10, 0.1, 0.01).is_err());
        assert!(make_schedule(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn ddim_pairs_cover_schedule() {
        let s = make_schedule(1000, 1e-4, 0.02).unwrap();
        let p = s.ddim_pairs(50);
        assert_eq!(p.len(), 50);
        assert_eq!(p[0], (980, 960));
        assert_eq!(*p.last().unwrap(), (0, -1));
        let s = make_schedule(10, 1e-4, 0.02).unwrap();
        assert_eq!(s.ddim_pairs(10).len(), 10);
    }

    #[test]
    fn exact_eps_reaches_x0() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let x0 = [0.3, -0.7];
        let eps = [1.2, 0.4];
        let mut x = s.q_sample(&x0, s.ddim_pairs(10)[0].0, &eps);
        for (t, tp) in s.ddim_pairs(10) {
            x = s.ddim_step(&x, &eps, t, tp, 0.0, None, None);
        }
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn clipping_bounds_the_x0_estimate() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let at = s.alpha_bar(90);
        // eps = 0 makes x0 = x / sqrt(at), far outside [-1, 1].
        let x = [0.9];
        let out = s.ddim_step(&x, &[0.0], 90, 80, 0.0, None, Some(1.0));
        let ap = s.alpha_bar(80);
        let e = (0.9 - at.sqrt()) / (1.0 - at).sqrt();
        assert!((out[0] - (ap.sqrt() + (1.0 - ap).sqrt() * e)).abs() < 1e-12);
        // Inside the range nothing changes.
        let x0 = [0.5];
        let xt = s.q_sample(&x0, 90, &[0.2]);
        assert_eq!(s.ddim_step(&xt, &[0.2], 90, 80, 0.0, None, Some(1.0)), s.ddim_step(&xt, &[0.2], 90, 80, 0.0, None, None));
    }
}
