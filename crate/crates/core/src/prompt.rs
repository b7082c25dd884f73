//! Isotropic Gaussian model of the prompts an attacker might use for a set of
//! images.
//!
//! The mean is found by momentum descent on the diffusion loss starting from
//! the reference prompt `c0`; the variance comes from matching the quadratic
//! form of the loss between `c0` and the mean:
//! `sigma^2 = ||c0 - c_hat||^2 / (2 (L(c0) - L(c_hat)))`.

use serde::{Deserialize, Serialize};

use crate::diffusion::ToyModel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Loss gaps at or below this are treated as degenerate and clamped.
pub const DELTA_LOSS_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptGaussian {
    pub mean: Vec<f64>,
    /// Isotropic variance, the scalar stand-in for the inverse Hessian.
    pub variance: f64,
}

impl PromptGaussian {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::invalid("variance", format!("{variance} is not finite and >= 0")));
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `mean + sqrt(variance) * z` with `z ~ N(0, I)`.
pub fn sample_prompt(g: &PromptGaussian, rng: &mut Rng) -> Vec<f64> {
    let sd = g.variance.sqrt();
    g.mean.iter().map(|m| m + sd * rng.gaussian()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhiConfig {
    /// Number of momentum steps N.
    pub steps: usize,
    /// Step size r.
    pub lr: f64,
    /// Momentum coefficient beta.
    pub momentum: f64,
    /// Evenly spaced timesteps used to score iterates for best-iterate selection.
    pub score_timesteps: usize,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            steps: 15,
            lr: 1e-3,
            momentum: 0.5,
            score_timesteps: 10,
        }
    }
}

impl PhiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("text_lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if self.score_timesteps == 0 {
            return Err(Error::invalid("score_timesteps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiStep {
    pub c: Vec<f64>,
    pub momentum: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTrace {
    /// Iterates `c_0 ..= c_N`.
    pub steps: Vec<PhiStep>,
    /// Index of the lowest-loss iterate.
    pub best: usize,
}

impl PhiTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    pub fn best_loss(&self) -> f64 {
        self.steps[self.best].loss
    }

    pub fn initial_loss(&self) -> f64 {
        self.steps[0].loss
    }
}

/// What momentum descent needs from a loss over prompt embeddings.
pub trait PromptObjective {
    /// Gradient driving step `iteration`; may be stochastic.
    fn step_grad(&mut self, c: &[f64], iteration: usize) -> Result<Vec<f64>>;
    /// Deterministic score recorded for an iterate and used to pick the best one.
    fn score(&mut self, c: &[f64]) -> Result<f64>;
}

/// `m_j = beta m_{j-1} + (1 - beta) g_j`, `c_j = c_{j-1} - r m_j`, keeping the
/// iterate with the lowest score.
pub fn momentum_descent<O: PromptObjective + ?Sized>(
    objective: &mut O,
    c0: &[f64],
    cfg: &PhiConfig,
) -> Result<(Vec<f64>, PhiTrace)> {
    cfg.validate()?;
    let mut c = c0.to_vec();
    let mut m = vec![0.0; c.len()];
    let mut steps = vec![PhiStep {
        c: c.clone(),
        momentum: m.clone(),
        loss: objective.score(&c)?,
    }];
    for j in 0..cfg.steps {
        let g = objective.step_grad(&c, j)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Iteration {
                iteration: j,
                losses: steps.iter().map(|s| s.loss).collect(),
            });
        }
        for ((mi, gi), ci) in m.iter_mut().zip(&g).zip(c.iter_mut()) {
            *mi = cfg.momentum * *mi + (1.0 - cfg.momentum) * gi;
            *ci -= cfg.lr * *mi;
        }
        let loss = objective.score(&c)?;
        if !loss.is_finite() {
            return Err(Error::Iteration {
                iteration: j,
                losses: steps.iter().map(|s| s.loss).collect(),
            });
        }
        steps.push(PhiStep {
            c: c.clone(),
            momentum: m.clone(),
            loss,
        });
    }
    // First minimum wins ties, so an iterate only replaces c0 by strictly improving.
    let best = steps
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if s.loss < steps[b].loss { i } else { b });
    Ok((steps[best].c.clone(), PhiTrace { steps, best }))
}

/// Evenly spaced timesteps covering `1..=steps`.
pub fn score_timesteps(steps: usize, count: usize) -> Vec<usize> {
    (0..count)
        .map(|k| (((k as f64 + 0.5) * steps as f64 / count as f64).ceil() as usize).clamp(1, steps))
        .collect()
}

/// Diffusion loss over an image set with one fixed noise draw `eps_c`.
/// Steps use a fresh uniform timestep each; scores average over a fixed grid.
pub struct DiffusionObjective<'a> {
    pub model: &'a ToyModel,
    pub images: &'a [Image],
    pub eps: Vec<f64>,
    pub grid: Vec<usize>,
    pub rng: Rng,
}

impl DiffusionObjective<'_> {
    pub fn mean_loss_at(&self, c: &[f64], t: usize) -> Result<f64> {
        let mut total = 0.0;
        for x in self.images {
            total += self.model.loss(x, &self.eps, t, c)?;
        }
        Ok(total / self.images.len() as f64)
    }
}

impl PromptObjective for DiffusionObjective<'_> {
    fn step_grad(&mut self, c: &[f64], _iteration: usize) -> Result<Vec<f64>> {
        let t = self.rng.timestep(self.model.steps());
        let mut g = vec![0.0; c.len()];
        for x in self.images {
            let lg = self.model.loss_grad(x, &self.eps, t, c, false)?;
            g.iter_mut().zip(&lg.d_c).for_each(|(a, b)| *a += b);
        }
        let n = self.images.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok(g)
    }

    fn score(&mut self, c: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for &t in &self.grid {
            total += self.mean_loss_at(c, t)?;
        }
        Ok(total / self.grid.len() as f64)
    }
}

/// Mean estimator: momentum descent on the diffusion loss of `images`, started
/// from `c0`, with a single noise draw for the whole run. Returns the best
/// iterate (not necessarily the last) and the full trace.
pub fn estimate_mean_phi(
    model: &ToyModel,
    images: &[Image],
    c0: &[f64],
    cfg: &PhiConfig,
    rng: &Rng,
) -> Result<(Vec<f64>, PhiTrace)> {
    let mut objective = phi_objective(model, images, cfg, rng)?;
    momentum_descent(&mut objective, c0, cfg)
}

fn phi_objective<'a>(
    model: &'a ToyModel,
    images: &'a [Image],
    cfg: &PhiConfig,
    rng: &Rng,
) -> Result<DiffusionObjective<'a>> {
    if images.is_empty() {
        return Err(Error::invalid("images", "need at least one image"));
    }
    cfg.validate()?;
    let eps = rng.child("eps_c").gaussian_vec(model.dims().pixels());
    Ok(DiffusionObjective {
        model,
        images,
        eps,
        grid: score_timesteps(model.steps(), cfg.score_timesteps),
        rng: rng.child("t_c"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    /// `L(c0) - L(c_hat)` before clamping.
    pub raw_delta: f64,
    /// Set when the raw gap was at or below [`DELTA_LOSS_MIN`].
    pub degenerate: bool,
}

/// `dist_sq / (2 max(delta, DELTA_LOSS_MIN))`.
pub fn variance_from_losses(dist_sq: f64, loss_c0: f64, loss_hat: f64) -> VarianceEstimate {
    let raw_delta = loss_c0 - loss_hat;
    let degenerate = !(raw_delta > DELTA_LOSS_MIN);
    let delta = if degenerate { DELTA_LOSS_MIN } else { raw_delta };
    VarianceEstimate {
        variance: dist_sq / (2.0 * delta),
        raw_delta,
        degenerate,
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Variance estimator evaluated at a single (image, noise, timestep) draw.
pub fn estimate_variance_psi(
    model: &ToyModel,
    x: &Image,
    eps: &[f64],
    t: usize,
    c0: &[f64],
    c_hat: &[f64],
) -> Result<VarianceEstimate> {
    let d2 = dist_sq(c0, c_hat);
    if d2 == 0.0 {
        return Err(Error::Degenerate("c0 equals c_hat"));
    }
    let l0 = model.loss(x, eps, t, c0)?;
    let l1 = model.loss(x, eps, t, c_hat)?;
    Ok(variance_from_losses(d2, l0, l1))
}

/// A fitted prompt distribution together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeledPrompts {
    pub gaussian: PromptGaussian,
    pub trace: PhiTrace,
    pub estimate: VarianceEstimate,
}

/// Mean from the mean estimator, variance from the loss gap of the same scoring
/// objective (so the gap is never negative). If no iterate improved on `c0`
/// the variance is zero and the estimate is flagged degenerate.
pub fn model_prompt_distribution(
    model: &ToyModel,
    images: &[Image],
    c0: &[f64],
    cfg: &PhiConfig,
    rng: &Rng,
) -> Result<ModeledPrompts> {
    let (c_hat, trace) = estimate_mean_phi(model, images, c0, cfg, rng)?;
    let d2 = dist_sq(c0, &c_hat);
    let estimate = if d2 == 0.0 {
        VarianceEstimate {
            variance: 0.0,
            raw_delta: 0.0,
            degenerate: true,
        }
    } else {
        variance_from_losses(d2, trace.initial_loss(), trace.best_loss())
    };
    Ok(ModeledPrompts {
        gaussian: PromptGaussian::new(c_hat, estimate.variance)?,
        trace,
        estimate,
    })
}
