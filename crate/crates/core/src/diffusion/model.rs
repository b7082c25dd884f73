//! The conditional noise predictor and its analytic gradients.
//!
//! Architecture: `[x_t ; time features ; c] -> tanh(W1 . + b1) -> tanh(W2 . + b2)
//! -> W3 . + b3`, plus a time-gated linear skip `g(t) * x_t` added to the
//! output, where `g(t) = s0 + s . time_features(t)`. The hidden layers are
//! narrower than the image, so without the skip the network cannot represent
//! the full-rank part of the `x_t -> eps` map. All parameters live in one flat
//! vector so optimizers and finite-difference checks can treat them uniformly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::{NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub height: usize,
    pub width: usize,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            embed_dim: 16,
            time_dim: 8,
            hidden: 128,
        }
    }
}

impl ModelDims {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn input_dim(&self) -> usize {
        self.pixels() + self.time_dim + self.embed_dim
    }

    pub fn param_count(&self) -> usize {
        let (i, h, p) = (self.input_dim(), self.hidden, self.pixels());
        h * i + h + h * h + h + p * h + p + self.time_dim + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels() == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("dims", "extents must be positive"));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::invalid("time_dim", "must be even"));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let (i, h, p) = (self.input_dim(), self.hidden, self.pixels());
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + p * h;
        let skip = b3 + p;
        Layout {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            skip,
            end: skip + self.time_dim + 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    /// Skip gate: `time_dim` weights followed by one bias.
    skip: usize,
    end: usize,
}

/// Sinusoidal features of the timestep.
pub fn time_features(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let freq = (-(1000f64.ln()) * k as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    dims: ModelDims,
    theta: Vec<f64>,
}

const LAYER_NAMES: [&str; 7] = ["w1", "b1", "w2", "b2", "w3", "b3", "skip"];

impl DenoiserParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            theta: vec![0.0; dims.param_count()],
        }
    }

    /// Gaussian weights with std 1/sqrt(fan_in), zero biases.
    pub fn init(dims: ModelDims, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(dims);
        let l = dims.layout();
        let fill = |theta: &mut [f64], fan_in: usize, rng: &mut Rng| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            theta.iter_mut().for_each(|w| *w = scale * rng.gaussian());
        };
        fill(&mut p.theta[l.w1..l.b1], dims.input_dim(), rng);
        fill(&mut p.theta[l.w2..l.b2], dims.hidden, rng);
        fill(&mut p.theta[l.w3..l.b3], dims.hidden, rng);
        p
    }

    pub fn from_flat(dims: ModelDims, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != dims.param_count() {
            return Err(Error::Shape {
                what: "flat parameter vector",
                expected: vec![dims.param_count()],
                got: vec![theta.len()],
            });
        }
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, theta })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        for (w, g) in self.theta.iter_mut().zip(grad) {
            *w -= lr * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn layer_tensors(&self) -> Vec<(&'static str, Tensor)> {
        let l = self.dims.layout();
        let (i, h, p) = (self.dims.input_dim(), self.dims.hidden, self.dims.pixels());
        let spans = [
            (l.w1, l.b1, vec![h, i]),
            (l.b1, l.w2, vec![h]),
            (l.w2, l.b2, vec![h, h]),
            (l.b2, l.w3, vec![h]),
            (l.w3, l.b3, vec![p, h]),
            (l.b3, l.skip, vec![p]),
            (l.skip, l.end, vec![self.dims.time_dim + 1]),
        ];
        LAYER_NAMES
            .iter()
            .zip(spans)
            .map(|(name, (a, b, shape))| {
                let t = Tensor::from_f64(shape, self.theta[a..b].to_vec()).expect("finite params");
                (*name, t)
            })
            .collect()
    }

    fn pass(&self, x_t: &[f64], t: usize, c: &[f64]) -> Pass {
        let d = &self.dims;
        let l = d.layout();
        let (n_in, h) = (d.input_dim(), d.hidden);
        let mut input = Vec::with_capacity(n_in);
        input.extend_from_slice(x_t);
        input.extend(time_features(t, d.time_dim));
        input.extend_from_slice(c);

        let th = &self.theta;
        let h1 = affine_tanh(&th[l.w1..l.b1], &th[l.b1..l.w2], &input, h);
        let h2 = affine_tanh(&th[l.w2..l.b2], &th[l.b2..l.w3], &h1, h);
        let mut out = affine(&th[l.w3..l.b3], &th[l.b3..l.skip], &h2, d.pixels());
        let gate = self.gate(&input[d.pixels()..d.pixels() + d.time_dim]);
        for (o, x) in out.iter_mut().zip(x_t) {
            *o += gate * x;
        }
        Pass {
            input,
            h1,
            h2,
            gate,
            out,
        }
    }

    fn gate(&self, time_feats: &[f64]) -> f64 {
        let l = self.dims.layout();
        let s = &self.theta[l.skip..l.end];
        let (w, b) = s.split_at(self.dims.time_dim);
        b[0] + w.iter().zip(time_feats).map(|(a, f)| a * f).sum::<f64>()
    }

    /// Backpropagate `d_out` through a recorded pass. Returns the gradient with
    /// respect to the network input and, when `d_theta` is given, accumulates
    /// parameter gradients into it.
    fn backward(&self, pass: &Pass, d_out: &[f64], mut d_theta: Option<&mut [f64]>) -> Vec<f64> {
        let d = &self.dims;
        let l = d.layout();
        let (n_in, h, p) = (d.input_dim(), d.hidden, d.pixels());
        let th = &self.theta;

        let w3 = &th[l.w3..l.b3];
        let mut d_h2 = vec![0.0; h];
        for (j, &g) in d_out.iter().enumerate().take(p) {
            let row = &w3[j * h..(j + 1) * h];
            for (acc, w) in d_h2.iter_mut().zip(row) {
                *acc += g * w;
            }
        }
        if let Some(dt) = d_theta.as_deref_mut() {
            outer_accumulate(&mut dt[l.w3..l.b3], d_out, &pass.h2);
            add_into(&mut dt[l.b3..l.skip], d_out);
            let x_t = &pass.input[..p];
            let dot: f64 = d_out.iter().zip(x_t).map(|(g, x)| g * x).sum();
            let feats = &pass.input[p..p + d.time_dim];
            for (acc, f) in dt[l.skip..l.end - 1].iter_mut().zip(feats) {
                *acc += dot * f;
            }
            dt[l.end - 1] += dot;
        }

        let d_pre2: Vec<f64> = d_h2
            .iter()
            .zip(&pass.h2)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        let w2 = &th[l.w2..l.b2];
        let mut d_h1 = vec![0.0; h];
        for (j, &g) in d_pre2.iter().enumerate() {
            let row = &w2[j * h..(j + 1) * h];
            for (acc, w) in d_h1.iter_mut().zip(row) {
                *acc += g * w;
            }
        }
        if let Some(dt) = d_theta.as_deref_mut() {
            outer_accumulate(&mut dt[l.w2..l.b2], &d_pre2, &pass.h1);
            add_into(&mut dt[l.b2..l.w3], &d_pre2);
        }

        let d_pre1: Vec<f64> = d_h1
            .iter()
            .zip(&pass.h1)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        let w1 = &th[l.w1..l.b1];
        let mut d_input = vec![0.0; n_in];
        for (j, &g) in d_pre1.iter().enumerate() {
            let row = &w1[j * n_in..(j + 1) * n_in];
            for (acc, w) in d_input.iter_mut().zip(row) {
                *acc += g * w;
            }
        }
        if let Some(dt) = d_theta {
            outer_accumulate(&mut dt[l.w1..l.b1], &d_pre1, &pass.input);
            add_into(&mut dt[l.b1..l.w2], &d_pre1);
        }
        for (acc, g) in d_input.iter_mut().zip(d_out) {
            *acc += pass.gate * g;
        }
        d_input
    }
}

struct Pass {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    gate: f64,
    out: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|j| {
            let row = &w[j * cols..(j + 1) * cols];
            b[j] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
        })
        .collect()
}

fn affine_tanh(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let mut y = affine(w, b, x, rows);
    y.iter_mut().for_each(|v| *v = v.tanh());
    y
}

fn outer_accumulate(dw: &mut [f64], rows: &[f64], cols: &[f64]) {
    let n = cols.len();
    for (j, &g) in rows.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (acc, v) in dw[j * n..(j + 1) * n].iter_mut().zip(cols) {
            *acc += g * v;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Loss value with gradients with respect to the clean image, the prompt
/// embedding, and (optionally) the parameters.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_x0: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_params: Option<Vec<f64>>,
}

/// Parameters bundled with the noise schedule they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub params: DenoiserParams,
    schedule_config: ScheduleConfig,
    schedule: NoiseSchedule,
}

impl ToyModel {
    pub fn new(params: DenoiserParams, schedule_config: ScheduleConfig) -> Result<Self> {
        params.dims().validate()?;
        let schedule = schedule_config.build()?;
        Ok(Self {
            params,
            schedule_config,
            schedule,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        self.params.dims()
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn schedule_config(&self) -> &ScheduleConfig {
        &self.schedule_config
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    fn check_inputs(&self, pixels: usize, eps: Option<usize>, c: usize) -> Result<()> {
        let d = self.dims();
        let shape_err = |what, expected: usize, got: usize| Error::Shape {
            what,
            expected: vec![expected],
            got: vec![got],
        };
        if pixels != d.pixels() {
            return Err(shape_err("image pixels", d.pixels(), pixels));
        }
        if let Some(n) = eps {
            if n != d.pixels() {
                return Err(shape_err("noise", d.pixels(), n));
            }
        }
        if c != d.embed_dim {
            return Err(shape_err("prompt embedding", d.embed_dim, c));
        }
        Ok(())
    }

    /// Predicted noise for a noised image at step `t` under prompt `c`.
    pub fn predict(&self, x_t: &[f64], t: usize, c: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(x_t.len(), None, c.len())?;
        self.schedule.alpha_bar(t)?;
        Ok(self.params.pass(x_t, t, c).out)
    }

    /// `|| eps - eps_theta(x_t, t, c) ||^2` with `x_t` from the forward process.
    pub fn loss(&self, x0: &Image, eps: &[f64], t: usize, c: &[f64]) -> Result<f64> {
        self.check_inputs(x0.len(), Some(eps.len()), c.len())?;
        let abar = self.schedule.alpha_bar(t)?;
        let x_t = super::schedule::noise_with_alpha_bar(&x0.pixels, eps, abar);
        let out = self.params.pass(&x_t, t, c).out;
        Ok(squared_error(eps, &out))
    }

    /// Loss and input gradients; parameter gradients only when `with_params`.
    pub fn loss_grad(
        &self,
        x0: &Image,
        eps: &[f64],
        t: usize,
        c: &[f64],
        with_params: bool,
    ) -> Result<LossGrad> {
        self.check_inputs(x0.len(), Some(eps.len()), c.len())?;
        let d = *self.dims();
        let abar = self.schedule.alpha_bar(t)?;
        let x_t = super::schedule::noise_with_alpha_bar(&x0.pixels, eps, abar);
        let pass = self.params.pass(&x_t, t, c);
        let loss = squared_error(eps, &pass.out);
        let d_out: Vec<f64> = pass.out.iter().zip(eps).map(|(o, e)| 2.0 * (o - e)).collect();
        let mut d_params = with_params.then(|| vec![0.0; d.param_count()]);
        let d_input = self.params.backward(&pass, &d_out, d_params.as_deref_mut());
        let scale = abar.sqrt();
        let d_x0 = d_input[..d.pixels()].iter().map(|g| g * scale).collect();
        let d_c = d_input[d.pixels() + d.time_dim..].to_vec();
        Ok(LossGrad {
            loss,
            d_x0,
            d_c,
            d_params,
        })
    }

    /// Write the checkpoint directory: one PAPT file per layer plus `model.json`.
    pub fn save(&self, dir: impl AsRef<Path>, training_seed: u64) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, tensor) in self.params.layer_tensors() {
            tensor.write(dir.join(format!("{name}.papt")))?;
        }
        let manifest = CheckpointManifest {
            format: "pap-toy-denoiser".into(),
            dims: *self.dims(),
            schedule: self.schedule_config,
            training_seed,
            layers: LAYER_NAMES.iter().map(|n| format!("{n}.papt")).collect(),
        };
        let path = dir.join("model.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }

    /// Load a checkpoint written by [`ToyModel::save`]; returns the training seed too.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, u64)> {
        let dir = dir.as_ref();
        let path = dir.join("model.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)?;
        manifest.dims.validate()?;
        let mut theta = Vec::with_capacity(manifest.dims.param_count());
        for name in LAYER_NAMES {
            theta.extend(Tensor::read(dir.join(format!("{name}.papt")))?.into_f64_vec());
        }
        let params = DenoiserParams::from_flat(manifest.dims, theta)?;
        Ok((Self::new(params, manifest.schedule)?, manifest.training_seed))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointManifest {
    format: String,
    dims: ModelDims,
    schedule: ScheduleConfig,
    training_seed: u64,
    layers: Vec<String>,
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn denoiser_forward(model: &ToyModel, x_t: &[f64], t: usize, c: &[f64]) -> Result<Vec<f64>> {
    model.predict(x_t, t, c)
}

pub fn diffusion_loss(model: &ToyModel, x0: &Image, eps: &[f64], t: usize, c: &[f64]) -> Result<f64> {
    model.loss(x0, eps, t, c)
}

/// All three gradients of the diffusion loss.
pub fn loss_grad(model: &ToyModel, x0: &Image, eps: &[f64], t: usize, c: &[f64]) -> Result<LossGrad> {
    model.loss_grad(x0, eps, t, c, true)
}
