//! Sign-gradient perturbation attacks on the toy diffusion loss.
//!
//! All modes ascend the loss. `Pap` samples a prompt per iteration from the
//! modeled Gaussian, `PromptSpecific` always uses `c0`, `Tanh` optimizes an
//! unconstrained latent `delta` with `x = (tanh(delta) + 1) / 2`, and `AsPap`
//! interleaves PAP rounds with SGD on a private copy of the model.

use serde::{Deserialize, Serialize};

use crate::diffusion::ToyModel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::prompt::{
    estimate_mean_phi, estimate_variance_psi, sample_prompt, PhiConfig, PhiTrace, PromptGaussian,
};
use crate::rng::Rng;

/// Pixels are squeezed into `[TANH_EDGE, 1 - TANH_EDGE]` before `atanh`.
pub const TANH_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Pap,
    #[serde(alias = "specific")]
    PromptSpecific,
    Tanh,
    #[serde(alias = "as_pap")]
    Aspap,
}

impl AttackMode {
    pub const ALL: [AttackMode; 4] = [
        AttackMode::Pap,
        AttackMode::PromptSpecific,
        AttackMode::Tanh,
        AttackMode::Aspap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackMode::Pap => "pap",
            AttackMode::PromptSpecific => "specific",
            AttackMode::Tanh => "tanh",
            AttackMode::Aspap => "aspap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pap" => Ok(AttackMode::Pap),
            "specific" | "prompt_specific" => Ok(AttackMode::PromptSpecific),
            "tanh" => Ok(AttackMode::Tanh),
            "aspap" | "as_pap" => Ok(AttackMode::Aspap),
            other => Err(Error::invalid("mode", format!("unknown attack mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// L-infinity budget.
    pub eta: f64,
    /// Image step size.
    pub alpha: f64,
    /// Attack iterations per round (M).
    pub steps: usize,
    /// Mean-estimator steps (N).
    pub text_steps: usize,
    /// Mean-estimator step size (r).
    pub text_lr: f64,
    /// Mean-estimator momentum (beta).
    pub momentum: f64,
    /// Timesteps used to score mean-estimator iterates.
    pub score_timesteps: usize,
    /// Surrogate learning rate (AS-PAP).
    pub gamma: f64,
    /// Outer rounds (AS-PAP).
    pub rounds: usize,
    /// Surrogate SGD steps per round (AS-PAP).
    pub surrogate_steps: usize,
    pub mode: AttackMode,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            alpha: 1.0 / 255.0,
            steps: 50,
            text_steps: 15,
            text_lr: 1e-3,
            momentum: 0.5,
            score_timesteps: 10,
            gamma: 1e-3,
            rounds: 1,
            surrogate_steps: 5,
            mode: AttackMode::Pap,
        }
    }
}

impl AttackConfig {
    pub fn with_mode(mode: AttackMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn phi(&self) -> PhiConfig {
        PhiConfig {
            steps: self.text_steps,
            lr: self.text_lr,
            momentum: self.momentum,
            score_timesteps: self.score_timesteps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if self.alpha > self.eta {
            return Err(Error::invalid("alpha", format!("{} exceeds eta {}", self.alpha, self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must be finite and >= 0"));
        }
        if self.mode == AttackMode::Aspap && self.rounds == 0 {
            return Err(Error::invalid("rounds", "AS-PAP needs at least one round"));
        }
        self.phi().validate()
    }
}

/// Elementwise sign with `sign(0) = 0`.
pub fn sign(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn check_shape(what: &'static str, x: &Image, len: usize) -> Result<()> {
    if x.len() != len {
        return Err(Error::Shape {
            what,
            expected: vec![x.len()],
            got: vec![len],
        });
    }
    Ok(())
}

/// Project onto `[x0 - eta, x0 + eta]`, then onto `[0, 1]`.
fn project(candidate: f64, x0: f64, eta: f64) -> f64 {
    candidate.clamp(x0 - eta, x0 + eta).clamp(0.0, 1.0)
}

/// `clip_{x0, eta}(x + alpha * sign(g))`.
pub fn pgd_step(x: &Image, g: &[f64], alpha: f64, x0: &Image, eta: f64) -> Result<Image> {
    Ok(pgd_step_parts(x, g, alpha, x0, eta)?.2)
}

fn pgd_step_parts(
    x: &Image,
    g: &[f64],
    alpha: f64,
    x0: &Image,
    eta: f64,
) -> Result<(Vec<f64>, Vec<f64>, Image)> {
    check_shape("gradient", x, g.len())?;
    if !x.same_shape(x0) {
        return Err(Error::Shape {
            what: "reference image",
            expected: vec![x.height, x.width],
            got: vec![x0.height, x0.width],
        });
    }
    if !(alpha > 0.0 && eta > 0.0) {
        return Err(Error::invalid("alpha/eta", "must be positive"));
    }
    let s = sign(g);
    let candidate: Vec<f64> = x.pixels.iter().zip(&s).map(|(p, d)| p + alpha * d).collect();
    let pixels = candidate
        .iter()
        .zip(&x0.pixels)
        .map(|(&c, &o)| project(c, o, eta))
        .collect();
    let next = Image::new(x.height, x.width, pixels)?;
    Ok((s, candidate, next))
}

/// One sign step as seen by an observer.
pub struct StepEvent<'a> {
    /// Global iteration index (across AS-PAP rounds).
    pub iteration: usize,
    pub before: &'a Image,
    pub sign: &'a [f64],
    /// `before + alpha * sign`, prior to projection.
    pub candidate: &'a [f64],
    pub after: &'a Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub t: usize,
    /// Loss at the iterate before the step, under the sampled prompt.
    pub loss: f64,
    pub prompt: Vec<f64>,
    /// Variance used to sample the prompt (zero for the fixed-prompt modes).
    pub variance: f64,
    pub degenerate: bool,
    /// `||x_{i+1} - x0||_inf` after the step.
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionResult {
    pub x_adv: Image,
    pub trace: Vec<IterationRecord>,
    /// The prompt distribution of the final iteration (PAP and AS-PAP only).
    pub distribution: Option<PromptGaussian>,
    pub phi: Option<PhiTrace>,
    pub config: AttackConfig,
    pub seed: u64,
    pub linf: f64,
}

impl ProtectionResult {
    pub fn losses(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.loss).collect()
    }
}

enum Prompts<'a> {
    Fixed(&'a [f64]),
    Modeled { c0: &'a [f64], c_hat: &'a [f64] },
}

struct Engine<'a, 'o> {
    x0: &'a Image,
    cfg: &'a AttackConfig,
    rng: &'a Rng,
    observer: Option<&'o mut dyn FnMut(&StepEvent)>,
    trace: Vec<IterationRecord>,
    last: Option<PromptGaussian>,
}

impl Engine<'_, '_> {
    /// Draw (t, eps) and the prompt for global iteration `k`.
    fn draw(
        &mut self,
        model: &ToyModel,
        x: &Image,
        prompts: &Prompts,
        k: usize,
    ) -> Result<(usize, Vec<f64>, Vec<f64>, f64, bool)> {
        let mut r = self.rng.child_indexed("iter", k as u64);
        let t = r.timestep(model.steps());
        let eps = r.gaussian_vec(x.len());
        match prompts {
            Prompts::Fixed(c) => Ok((t, eps, c.to_vec(), 0.0, false)),
            Prompts::Modeled { c0, c_hat } => {
                let (variance, degenerate) = if c0 == c_hat {
                    // No iterate improved on c0: the modeled distribution collapses to a point.
                    (0.0, true)
                } else {
                    let v = estimate_variance_psi(model, x, &eps, t, c0, c_hat)?;
                    (v.variance, v.degenerate)
                };
                let g = PromptGaussian::new(c_hat.to_vec(), variance)?;
                let c = sample_prompt(&g, &mut r);
                self.last = Some(g);
                Ok((t, eps, c, variance, degenerate))
            }
        }
    }

    /// `steps` sign-ascent iterations in pixel space starting at `x`.
    fn run_box(
        &mut self,
        model: &ToyModel,
        mut x: Image,
        prompts: &Prompts,
        offset: usize,
    ) -> Result<Image> {
        for i in 0..self.cfg.steps {
            let k = offset + i;
            let (t, eps, c, variance, degenerate) = self.draw(model, &x, prompts, k)?;
            let lg = model.loss_grad(&x, &eps, t, &c, false)?;
            if !lg.loss.is_finite() || lg.d_x0.iter().any(|g| !g.is_finite()) {
                return Err(Error::Iteration {
                    iteration: k,
                    losses: self.trace.iter().map(|r| r.loss).collect(),
                });
            }
            let (s, candidate, next) =
                pgd_step_parts(&x, &lg.d_x0, self.cfg.alpha, self.x0, self.cfg.eta)?;
            if let Some(obs) = self.observer.as_mut() {
                obs(&StepEvent {
                    iteration: k,
                    before: &x,
                    sign: &s,
                    candidate: &candidate,
                    after: &next,
                });
            }
            self.trace.push(IterationRecord {
                iteration: k,
                t,
                loss: lg.loss,
                prompt: c,
                variance,
                degenerate,
                linf: next.linf_distance(self.x0),
            });
            x = next;
        }
        Ok(x)
    }
}

/// Run the attack selected by `cfg.mode`. The second value is the surrogate
/// model for AS-PAP and `None` otherwise.
pub fn protect(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<(ProtectionResult, Option<ToyModel>)> {
    protect_observed(model, x0, c0, cfg, rng, None)
}

/// As [`protect`], reporting every pixel-space sign step to `observer`.
pub fn protect_observed(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
    observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<(ProtectionResult, Option<ToyModel>)> {
    cfg.validate()?;
    check_shape("image", x0, model.dims().pixels())?;
    if c0.len() != model.dims().embed_dim {
        return Err(Error::Shape {
            what: "prompt embedding",
            expected: vec![model.dims().embed_dim],
            got: vec![c0.len()],
        });
    }
    if x0.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("image", "pixels must lie in [0, 1]"));
    }
    match cfg.mode {
        AttackMode::Pap => run_pap(model, x0, c0, cfg, rng, observer).map(|r| (r, None)),
        AttackMode::PromptSpecific => {
            run_specific(model, x0, c0, cfg, rng, observer).map(|r| (r, None))
        }
        AttackMode::Tanh => run_tanh(model, x0, c0, cfg, rng).map(|r| (r, None)),
        AttackMode::Aspap => {
            run_aspap(model, x0, c0, cfg, rng, observer).map(|(r, m)| (r, Some(m)))
        }
    }
}

fn with_mode(cfg: &AttackConfig, mode: AttackMode) -> AttackConfig {
    AttackConfig { mode, ..*cfg }
}

pub fn pap_protect(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<ProtectionResult> {
    Ok(protect(model, x0, c0, &with_mode(cfg, AttackMode::Pap), rng)?.0)
}

pub fn prompt_specific_protect(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<ProtectionResult> {
    Ok(protect(model, x0, c0, &with_mode(cfg, AttackMode::PromptSpecific), rng)?.0)
}

pub fn tanh_protect(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<ProtectionResult> {
    Ok(protect(model, x0, c0, &with_mode(cfg, AttackMode::Tanh), rng)?.0)
}

pub fn aspap_protect(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<(ProtectionResult, ToyModel)> {
    let (r, m) = protect(model, x0, c0, &with_mode(cfg, AttackMode::Aspap), rng)?;
    Ok((r, m.expect("AS-PAP returns its surrogate")))
}

fn result(
    x_adv: Image,
    engine: Engine,
    phi: Option<PhiTrace>,
    cfg: &AttackConfig,
    rng: &Rng,
) -> ProtectionResult {
    let linf = x_adv.linf_distance(engine.x0);
    ProtectionResult {
        x_adv,
        trace: engine.trace,
        distribution: engine.last,
        phi,
        config: *cfg,
        seed: rng.key(),
        linf,
    }
}

fn run_pap(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
    observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<ProtectionResult> {
    let (c_hat, phi) = estimate_mean_phi(model, std::slice::from_ref(x0), c0, &cfg.phi(), &rng.child("phi"))?;
    let mut engine = Engine {
        x0,
        cfg,
        rng,
        observer,
        trace: Vec::with_capacity(cfg.steps),
        last: None,
    };
    let prompts = Prompts::Modeled { c0, c_hat: &c_hat };
    let x = engine.run_box(model, x0.clone(), &prompts, 0)?;
    Ok(result(x, engine, Some(phi), cfg, rng))
}

fn run_specific(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
    observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<ProtectionResult> {
    let mut engine = Engine {
        x0,
        cfg,
        rng,
        observer,
        trace: Vec::with_capacity(cfg.steps),
        last: None,
    };
    let x = engine.run_box(model, x0.clone(), &Prompts::Fixed(c0), 0)?;
    Ok(result(x, engine, None, cfg, rng))
}

fn run_aspap(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
    observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<(ProtectionResult, ToyModel)> {
    let mut surrogate = model.clone();
    let mut engine = Engine {
        x0,
        cfg,
        rng,
        observer,
        trace: Vec::with_capacity(cfg.steps * cfg.rounds),
        last: None,
    };
    let mut x = x0.clone();
    let mut phi = None;
    for round in 0..cfg.rounds {
        // The prompt mean is re-estimated for the current image and surrogate.
        let phi_rng = if round == 0 {
            rng.child("phi")
        } else {
            rng.child_indexed("phi", round as u64)
        };
        let (c_hat, trace) =
            estimate_mean_phi(&surrogate, std::slice::from_ref(&x), c0, &cfg.phi(), &phi_rng)?;
        let prompts = Prompts::Modeled { c0, c_hat: &c_hat };
        x = engine.run_box(&surrogate, x, &prompts, round * cfg.steps)?;
        phi = Some(trace);

        let mut r = rng.child_indexed("surrogate", round as u64);
        for step in 0..cfg.surrogate_steps {
            let t = r.timestep(surrogate.steps());
            let eps = r.gaussian_vec(x.len());
            let lg = surrogate.loss_grad(&x, &eps, t, c0, true)?;
            let grad = lg.d_params.expect("requested parameter gradients");
            surrogate.params.sgd_step(&grad, cfg.gamma);
            if !surrogate.params.is_finite() {
                return Err(Error::Diverged {
                    step: round * cfg.surrogate_steps + step,
                    loss: lg.loss,
                    trace: engine.trace.iter().map(|r| r.loss).collect(),
                });
            }
        }
    }
    Ok((result(x, engine, phi, cfg, rng), surrogate))
}

/// `x = (tanh(delta) + 1) / 2`.
pub fn tanh_to_image(delta: f64) -> f64 {
    0.5 * (delta.tanh() + 1.0)
}

/// `dx / d delta = (1 - tanh^2(delta)) / 2`.
pub fn tanh_jacobian(delta: f64) -> f64 {
    let th = delta.tanh();
    0.5 * (1.0 - th * th)
}

/// Inverse of [`tanh_to_image`] after squeezing `x` away from 0 and 1.
pub fn image_to_tanh(x: f64) -> f64 {
    (2.0 * x.clamp(TANH_EDGE, 1.0 - TANH_EDGE) - 1.0).atanh()
}

fn run_tanh(
    model: &ToyModel,
    x0: &Image,
    c0: &[f64],
    cfg: &AttackConfig,
    rng: &Rng,
) -> Result<ProtectionResult> {
    let mut delta: Vec<f64> = x0.pixels.iter().map(|&p| image_to_tanh(p)).collect();
    let to_image = |delta: &[f64]| Image::new(x0.height, x0.width, delta.iter().map(|&d| tanh_to_image(d)).collect());
    let mut x = to_image(&delta)?;
    let mut trace = Vec::with_capacity(cfg.steps);
    for i in 0..cfg.steps {
        let mut r = rng.child_indexed("iter", i as u64);
        let t = r.timestep(model.steps());
        let eps = r.gaussian_vec(x.len());
        let lg = model.loss_grad(&x, &eps, t, c0, false)?;
        if !lg.loss.is_finite() || lg.d_x0.iter().any(|g| !g.is_finite()) {
            return Err(Error::Iteration {
                iteration: i,
                losses: trace.iter().map(|r: &IterationRecord| r.loss).collect(),
            });
        }
        let g_delta: Vec<f64> = lg
            .d_x0
            .iter()
            .zip(&delta)
            .map(|(g, &d)| g * tanh_jacobian(d))
            .collect();
        for (d, s) in delta.iter_mut().zip(sign(&g_delta)) {
            *d += cfg.alpha * s;
        }
        x = to_image(&delta)?;
        trace.push(IterationRecord {
            iteration: i,
            t,
            loss: lg.loss,
            prompt: c0.to_vec(),
            variance: 0.0,
            degenerate: false,
            linf: x.linf_distance(x0),
        });
    }
    let linf = x.linf_distance(x0);
    Ok(ProtectionResult {
        x_adv: x,
        trace,
        distribution: None,
        phi: None,
        config: *cfg,
        seed: rng.key(),
        linf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserParams, ModelDims, ScheduleConfig};

    fn img(p: &[f64]) -> Image {
        Image::new(1, p.len(), p.to_vec()).unwrap()
    }

    fn small_model(seed: u64) -> ToyModel {
        let dims = ModelDims {
            height: 4,
            width: 4,
            embed_dim: 4,
            time_dim: 4,
            hidden: 16,
        };
        ToyModel::new(DenoiserParams::init(dims, &mut Rng::new(seed)), ScheduleConfig::default()).unwrap()
    }

    fn small_image() -> Image {
        Image::new(4, 4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap()
    }

    fn small_cfg(mode: AttackMode) -> AttackConfig {
        AttackConfig {
            steps: 8,
            text_steps: 3,
            ..AttackConfig::with_mode(mode)
        }
    }

    #[test]
    fn sign_values() {
        assert_eq!(sign(&[-0.2, 0.0, 3.1, -0.0]), vec![-1.0, 0.0, 1.0, 0.0]);
        let v = [-2.0, 0.0, 5.0];
        assert_eq!(sign(&sign(&v)), sign(&v));
    }

    #[test]
    fn pgd_pre_clip_deltas() {
        let x = img(&[0.5, 0.5, 0.5]);
        let (s, candidate, _) = pgd_step_parts(&x, &[-0.2, 0.0, 3.1], 0.1, &x, 0.5).unwrap();
        assert_eq!(s, vec![-1.0, 0.0, 1.0]);
        for ((c, p), want) in candidate.iter().zip(&x.pixels).zip([-0.1, 0.0, 0.1]) {
            assert!((c - p - want).abs() < 1e-15);
        }
    }

    #[test]
    fn pgd_box_and_range_clipping() {
        let x0 = img(&[0.50, 0.02]);
        let x = img(&[0.53, 0.02]);
        let next = pgd_step(&x, &[1.0, -1.0], 0.05, &x0, 0.05).unwrap();
        // 0.58 clips to 0.55; -0.03 clips to the box bottom -0.03 and then to 0.
        assert_eq!(next.pixels[0], 0.55);
        assert_eq!(next.pixels[1], 0.0);
    }

    #[test]
    fn pgd_shape_errors() {
        let x = img(&[0.5, 0.5]);
        assert!(pgd_step(&x, &[1.0], 0.1, &x, 0.1).is_err());
        assert!(pgd_step(&x, &[1.0, 1.0], 0.1, &img(&[0.5]), 0.1).is_err());
    }

    #[test]
    fn zero_steps_return_x0() {
        let model = small_model(1);
        let x0 = small_image();
        for mode in AttackMode::ALL {
            let mut cfg = small_cfg(mode);
            cfg.steps = 0;
            cfg.surrogate_steps = 0;
            let (r, _) = protect(&model, &x0, &[0.1; 4], &cfg, &Rng::new(2)).unwrap();
            assert!(r.trace.is_empty());
            if mode == AttackMode::Tanh {
                // Only the squeeze away from 0 and 1 moves pixels.
                assert!(r.x_adv.linf_distance(&x0) <= TANH_EDGE + 1e-12, "{mode:?}");
            } else {
                assert_eq!(r.x_adv, x0, "{mode:?}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let model = small_model(3);
        let x0 = small_image();
        for mode in AttackMode::ALL {
            let cfg = small_cfg(mode);
            let a = protect(&model, &x0, &[0.2; 4], &cfg, &Rng::new(9)).unwrap();
            let b = protect(&model, &x0, &[0.2; 4], &cfg, &Rng::new(9)).unwrap();
            assert_eq!(a, b, "{mode:?}");
        }
    }

    #[test]
    fn budget_holds_at_every_step() {
        let model = small_model(4);
        let x0 = small_image();
        for mode in [AttackMode::Pap, AttackMode::PromptSpecific, AttackMode::Aspap] {
            let mut cfg = small_cfg(mode);
            cfg.steps = 30;
            cfg.eta = 0.03;
            cfg.alpha = 0.01;
            let mut steps = 0;
            let mut obs = |e: &StepEvent| {
                steps += 1;
                for ((a, c), (b, o)) in e.after.pixels.iter().zip(e.candidate).zip(e.before.pixels.iter().zip(&x0.pixels)) {
                    assert!((a - o).abs() <= cfg.eta + 1e-12);
                    assert!((0.0..=1.0).contains(a));
                    let d = c - b;
                    assert!([-cfg.alpha, 0.0, cfg.alpha].iter().any(|s| (d - s).abs() < 1e-15));
                }
            };
            let (r, _) = protect_observed(&model, &x0, &[0.0; 4], &cfg, &Rng::new(5), Some(&mut obs)).unwrap();
            assert_eq!(steps, 30);
            assert!(r.trace.iter().all(|rec| rec.linf <= cfg.eta + 1e-12));
        }
    }

    #[test]
    fn aspap_without_surrogate_matches_pap() {
        let model = small_model(6);
        let x0 = small_image();
        let mut cfg = small_cfg(AttackMode::Aspap);
        cfg.surrogate_steps = 0;
        let (a, surrogate) = aspap_protect(&model, &x0, &[0.3; 4], &cfg, &Rng::new(1)).unwrap();
        assert_eq!(surrogate, model);
        let b = pap_protect(&model, &x0, &[0.3; 4], &cfg, &Rng::new(1)).unwrap();
        assert_eq!(a.x_adv, b.x_adv);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn aspap_surrogate_moves() {
        let model = small_model(6);
        let x0 = small_image();
        let mut cfg = small_cfg(AttackMode::Aspap);
        cfg.rounds = 2;
        let (r, surrogate) = aspap_protect(&model, &x0, &[0.3; 4], &cfg, &Rng::new(1)).unwrap();
        assert_ne!(surrogate.params, model.params);
        assert_eq!(r.trace.len(), 16);
        assert!(r.linf <= cfg.eta + 1e-12);
    }

    #[test]
    fn tanh_map() {
        assert_eq!(tanh_to_image(0.0), 0.5);
        assert!((tanh_to_image(40.0) - 1.0).abs() < 1e-15);
        assert_eq!(tanh_jacobian(0.0), 0.5);
        for d in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            let h = 1e-5;
            let fd = (tanh_to_image(d + h) - tanh_to_image(d - h)) / (2.0 * h);
            assert!((fd - tanh_jacobian(d)).abs() < 1e-8);
        }
        for p in [0.0, 0.25, 0.5, 1.0] {
            let back = tanh_to_image(image_to_tanh(p));
            assert!((back - p).abs() <= 1.1e-6);
        }
    }

    #[test]
    fn tanh_stays_inside_unit_interval() {
        let model = small_model(7);
        let x0 = small_image();
        let mut cfg = small_cfg(AttackMode::Tanh);
        cfg.steps = 20;
        let r = tanh_protect(&model, &x0, &[0.0; 4], &cfg, &Rng::new(3)).unwrap();
        assert!(r.x_adv.pixels.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(r.linf, r.x_adv.linf_distance(&x0));
    }

    #[test]
    fn invalid_configs() {
        let model = small_model(1);
        let x0 = small_image();
        let bad = [
            AttackConfig { eta: 0.0, ..Default::default() },
            AttackConfig { alpha: 0.1, eta: 0.05, ..Default::default() },
            AttackConfig { rounds: 0, mode: AttackMode::Aspap, ..Default::default() },
            AttackConfig { momentum: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(protect(&model, &x0, &[0.0; 4], &cfg, &Rng::new(1)).unwrap_err().is_validation());
        }
        assert!(protect(&model, &x0, &[0.0; 3], &AttackConfig::default(), &Rng::new(1)).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in AttackMode::ALL {
            assert_eq!(AttackMode::parse(m.name()).unwrap(), m);
        }
        assert!(AttackMode::parse("bogus").is_err());
    }
}
