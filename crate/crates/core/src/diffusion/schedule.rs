use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Linear-beta noise schedule. Timesteps are 1-based: `t` in `1..=steps()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(
            "beta",
            format!("need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"),
        ));
    }
    let alpha = (0..steps)
        .map(|i| {
            let frac = if steps == 1 {
                0.0
            } else {
                i as f64 / (steps - 1) as f64
            };
            1.0 - (beta_start + frac * (beta_end - beta_start))
        })
        .collect();
    NoiseSchedule::from_alphas(alpha)
}

impl NoiseSchedule {
    /// Schedule from explicit per-step alphas, each in (0, 1).
    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("alpha", "empty schedule"));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::invalid("alpha", format!("{a} outside (0, 1)")));
        }
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let sigma = alpha.iter().map(|a| (1.0 - a).sqrt()).collect();
        Ok(Self {
            alpha,
            alpha_bar,
            sigma,
        })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(
                "t",
                format!("timestep {t} outside 1..={}", self.steps()),
            ));
        }
        Ok(t - 1)
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.index(t)?])
    }

    /// Posterior noise scale used by the sampler, sqrt(beta_t).
    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(self.sigma[self.index(t)?])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// `sqrt(abar) * x0 + sqrt(1 - abar) * eps`.
pub fn noise_with_alpha_bar(x0: &[f64], eps: &[f64], alpha_bar: f64) -> Vec<f64> {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
}

/// Noised image at step `t` of the forward process.
pub fn forward_noise(x0: &Image, eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if eps.len() != x0.len() {
        return Err(Error::Shape {
            what: "noise vs image",
            expected: vec![x0.len()],
            got: vec![eps.len()],
        });
    }
    Ok(noise_with_alpha_bar(&x0.pixels, eps, sched.alpha_bar(t)?))
}
