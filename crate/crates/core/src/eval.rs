//! Fine-tune-and-measure protocol: a model copy is fine-tuned on clean images
//! and another on protected images, both under the same pseudo-prompt, and the
//! two are compared on held-out prompts around it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ddpm_sample, render, sgd_step, ToyModel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::prompt::{model_prompt_distribution, PhiConfig};
use crate::rng::Rng;
use crate::stats::{mean, std_dev};

/// (categories, prompts per category) cells of the prompt-variation grid.
pub const PROMPT_GRID: [(usize, usize); 5] = [(4, 20), (8, 10), (10, 8), (16, 5), (20, 4)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Identity,
    GaussianBlur { kernel: usize },
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Transform::Identity => Ok(()),
            Transform::GaussianBlur { kernel } if kernel >= 3 && kernel % 2 == 1 => Ok(()),
            Transform::GaussianBlur { kernel } => Err(Error::invalid(
                "kernel",
                format!("{kernel} is not an odd size >= 3"),
            )),
        }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let i = if i < 0 { -i } else { i };
    (if i >= n { 2 * (n - 1) - i } else { i }) as usize
}

fn gaussian_kernel(k: usize) -> Vec<f64> {
    let sd = k as f64 / 6.0;
    let half = (k / 2) as f64;
    let w: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * sd * sd)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Identity, or a normalized Gaussian blur (std `k / 6`) with reflect padding.
pub fn apply_transform(image: &Image, transform: &Transform) -> Result<Image> {
    transform.validate()?;
    let k = match *transform {
        Transform::Identity => return Ok(image.clone()),
        Transform::GaussianBlur { kernel } => kernel,
    };
    let (h, w) = (image.height, image.width);
    let half = k / 2;
    if half >= h || half >= w {
        return Err(Error::invalid(
            "kernel",
            format!("{k} is too large for a {h}x{w} image"),
        ));
    }
    let kern = gaussian_kernel(k);
    let mut rows = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] = kern
                .iter()
                .enumerate()
                .map(|(j, wt)| wt * image.get(r, reflect(c as isize + j as isize - half as isize, w)))
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let v: f64 = kern
                .iter()
                .enumerate()
                .map(|(j, wt)| wt * rows[reflect(r as isize + j as isize - half as isize, h) * w + c])
                .sum();
            out[r * w + c] = v.clamp(0.0, 1.0);
        }
    }
    Image::new(h, w, out)
}

/// Several photos of one synthetic identity, analogous to the handful of
/// portraits a user would protect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub attributes: Vec<f64>,
    /// Embedding of the identity; used as both `c0` and the pseudo-prompt.
    pub embedding: Vec<f64>,
    pub images: Vec<Image>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubjectSpec {
    pub photos: usize,
    /// Std of the per-photo attribute jitter.
    pub variation: f64,
    pub image_size: usize,
    pub embed_dim: usize,
}

impl Default for SubjectSpec {
    fn default() -> Self {
        Self {
            photos: 4,
            variation: 0.15,
            image_size: 16,
            embed_dim: 16,
        }
    }
}

pub fn generate_subject(spec: &SubjectSpec, rng: &Rng) -> Result<Subject> {
    if spec.photos == 0 {
        return Err(Error::invalid("photos", "must be positive"));
    }
    if spec.embed_dim == 0 || !spec.embed_dim.is_multiple_of(4) {
        return Err(Error::invalid("embed_dim", "must be a positive multiple of 4"));
    }
    if !(spec.variation >= 0.0 && spec.variation.is_finite()) {
        return Err(Error::invalid("variation", "must be finite and >= 0"));
    }
    let mut r = rng.child("identity");
    let attributes = r.gaussian_vec(spec.embed_dim);
    let embedding = attributes
        .iter()
        .map(|a| a + crate::diffusion::EMBEDDING_JITTER * r.gaussian())
        .collect();
    let images = (0..spec.photos)
        .map(|i| {
            let mut p = rng.child_indexed("photo", i as u64);
            let a: Vec<f64> = attributes
                .iter()
                .map(|a| a + spec.variation * p.gaussian())
                .collect();
            render(&a, spec.image_size)
        })
        .collect();
    Ok(Subject {
        attributes,
        embedding,
        images,
    })
}

/// SGD on the diffusion loss of `images` under the fixed prompt `c_star`.
pub fn finetune(
    model: &ToyModel,
    images: &[Image],
    c_star: &[f64],
    steps: usize,
    lr: f64,
    rng: &Rng,
) -> Result<ToyModel> {
    if images.is_empty() && steps > 0 {
        return Err(Error::invalid("images", "need at least one image"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("finetune_lr", "must be positive"));
    }
    let mut m = model.clone();
    let mut r = rng.clone();
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let i = r.below(images.len());
        let loss = sgd_step(&mut m, &images[i], c_star, lr, &mut r)?;
        if !loss.is_finite() || !m.params.is_finite() {
            return Err(Error::Diverged { step, loss, trace });
        }
        trace.push(loss);
    }
    Ok(m)
}

/// Mean loss of `images` over `prompts`, with `draws` (t, eps) pairs per
/// (prompt, image). Draws depend only on `rng` and the prompt index, so two
/// calls with the same `rng` are paired.
pub fn prompt_loss(
    model: &ToyModel,
    images: &[Image],
    prompts: &[Vec<f64>],
    draws: usize,
    rng: &Rng,
) -> Result<f64> {
    let per_prompt: Vec<f64> = prompts
        .par_iter()
        .enumerate()
        .map(|(k, c)| loss_at_prompt(model, images, c, draws, &rng.child_indexed("prompt", k as u64)))
        .collect::<Result<_>>()?;
    Ok(mean(&per_prompt))
}

fn loss_at_prompt(model: &ToyModel, images: &[Image], c: &[f64], draws: usize, rng: &Rng) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, x) in images.iter().enumerate() {
        let mut r = rng.child_indexed("image", i as u64);
        for _ in 0..draws {
            let t = r.timestep(model.steps());
            let eps = r.gaussian_vec(x.len());
            total += model.loss(x, &eps, t, c)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    /// Prompt used for fine-tuning; held-out prompts are placed around it.
    pub pseudo_prompt: Option<Vec<f64>>,
    pub categories: usize,
    pub per_category: usize,
    /// Radius unit. When absent it is the modeled prompt standard deviation of
    /// the clean images around the pseudo-prompt.
    pub sigma: Option<f64>,
    /// Category `k` sits at `sigma * radius_multipliers[k % len]`.
    pub radius_multipliers: Vec<f64>,
    /// Within-category spread of prompt directions around the category axis.
    pub spread: f64,
    pub eval_draws: usize,
    /// DDPM samples per held-out prompt for the reconstruction deviation.
    pub samples_per_prompt: usize,
    pub transform: Transform,
    /// Round images to 8 bits (after the transform) before fine-tuning.
    pub quantize: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            finetune_steps: 200,
            finetune_lr: 1e-3,
            pseudo_prompt: None,
            categories: 10,
            per_category: 8,
            sigma: None,
            radius_multipliers: vec![3.0, 4.0, 5.0, 6.0],
            spread: 0.3,
            eval_draws: 8,
            samples_per_prompt: 1,
            transform: Transform::Identity,
            quantize: false,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.finetune_lr > 0.0 && self.finetune_lr.is_finite()) {
            return Err(Error::invalid("finetune_lr", "must be positive"));
        }
        if self.categories == 0 || self.per_category == 0 {
            return Err(Error::invalid("categories", "grid cells must be non-empty"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("sigma", "must be positive"));
            }
        }
        if self.radius_multipliers.is_empty()
            || self.radius_multipliers.iter().any(|m| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::invalid("radius_multipliers", "need positive multipliers"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::invalid("spread", "must be finite and >= 0"));
        }
        if self.eval_draws == 0 {
            return Err(Error::invalid("eval_draws", "must be positive"));
        }
        if let Some(p) = &self.pseudo_prompt {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("pseudo_prompt", "must be finite"));
            }
        }
        self.transform.validate()
    }

    pub fn with_cell(&self, categories: usize, per_category: usize) -> Self {
        Self {
            categories,
            per_category,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPrompt {
    pub category: usize,
    pub index: usize,
    pub radius: f64,
    pub c: Vec<f64>,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Prompts at exact distance `radius_k` from `center`, grouped by category
/// axis. Category `k` and its prompts are the same for every grid cell that
/// contains them.
pub fn held_out_prompts(protocol: &EvalProtocol, center: &[f64], sigma: f64, rng: &Rng) -> Vec<HeldOutPrompt> {
    let d = center.len();
    let mut out = Vec::with_capacity(protocol.categories * protocol.per_category);
    for k in 0..protocol.categories {
        let axis = normalized(rng.child_indexed("category", k as u64).gaussian_vec(d));
        let radius = sigma * protocol.radius_multipliers[k % protocol.radius_multipliers.len()];
        for j in 0..protocol.per_category {
            let z = rng
                .child_indexed("category", k as u64)
                .child_indexed("prompt", j as u64)
                .gaussian_vec(d);
            let dir = normalized(axis.iter().zip(&z).map(|(a, z)| a + protocol.spread * z).collect());
            let c = center.iter().zip(&dir).map(|(c, u)| c + radius * u).collect();
            out.push(HeldOutPrompt {
                category: k,
                index: j,
                radius,
                c,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub category: usize,
    pub index: usize,
    pub radius: f64,
    pub clean_loss: f64,
    pub protected_loss: f64,
    pub clean_deviation: f64,
    pub protected_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: usize,
    pub radius: f64,
    pub clean_loss: f64,
    pub protected_loss: f64,
    pub loss_gap: f64,
    pub deviation_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    fn of(v: &[f64]) -> Self {
        Self {
            mean: mean(v),
            std: std_dev(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionReport {
    pub protocol: EvalProtocol,
    pub seed: u64,
    pub sigma: f64,
    pub prompts: Vec<PromptRecord>,
    pub categories: Vec<CategorySummary>,
    pub clean_loss: Aggregate,
    pub protected_loss: Aggregate,
    pub clean_deviation: Aggregate,
    pub protected_deviation: Aggregate,
    /// Mean protected-trained minus clean-trained held-out loss.
    pub loss_gap: f64,
    pub deviation_gap: f64,
}

fn nearest_distance(sample: &Image, originals: &[Image]) -> f64 {
    originals
        .iter()
        .map(|o| sample.l2_distance(o))
        .fold(f64::INFINITY, f64::min)
}

/// Images as the fine-tuning step sees them: transformed, then optionally
/// rounded to 8 bits. Used for the clean and the protected set alike.
pub fn prepare_images(images: &[Image], protocol: &EvalProtocol) -> Result<Vec<Image>> {
    images
        .iter()
        .map(|x| {
            let y = apply_transform(x, &protocol.transform)?;
            Ok(if protocol.quantize { y.quantize_8bit() } else { y })
        })
        .collect()
}

/// Modeled prompt standard deviation of `images` around `c`.
pub fn modeled_sigma(model: &ToyModel, images: &[Image], c: &[f64], rng: &Rng) -> Result<f64> {
    let m = model_prompt_distribution(model, images, c, &PhiConfig::default(), rng)?;
    if !(m.gaussian.variance > 0.0) {
        return Err(Error::Degenerate("modeled prompt variance is zero"));
    }
    Ok(m.gaussian.variance.sqrt())
}

pub fn evaluate_protection(
    model: &ToyModel,
    clean: &[Image],
    protected: &[Image],
    protocol: &EvalProtocol,
    rng: &Rng,
) -> Result<ProtectionReport> {
    protocol.validate()?;
    if clean.is_empty() || clean.len() != protected.len() {
        return Err(Error::Shape {
            what: "protected image list",
            expected: vec![clean.len()],
            got: vec![protected.len()],
        });
    }
    if clean.iter().zip(protected).any(|(a, b)| !a.same_shape(b)) {
        return Err(Error::invalid("protected", "image shapes differ from the clean set"));
    }
    let c_star = protocol
        .pseudo_prompt
        .clone()
        .ok_or_else(|| Error::invalid("pseudo_prompt", "required"))?;
    if c_star.len() != model.dims().embed_dim {
        return Err(Error::Shape {
            what: "pseudo_prompt",
            expected: vec![model.dims().embed_dim],
            got: vec![c_star.len()],
        });
    }
    let sigma = match protocol.sigma {
        Some(s) => s,
        None => modeled_sigma(model, clean, &c_star, &rng.child("sigma"))?,
    };

    let ft_rng = rng.child("finetune");
    let clean_in = prepare_images(clean, protocol)?;
    let prot_in = prepare_images(protected, protocol)?;
    let (clean_model, prot_model) = rayon::join(
        || finetune(model, &clean_in, &c_star, protocol.finetune_steps, protocol.finetune_lr, &ft_rng),
        || finetune(model, &prot_in, &c_star, protocol.finetune_steps, protocol.finetune_lr, &ft_rng),
    );
    let (clean_model, prot_model) = (clean_model?, prot_model?);

    let prompts = held_out_prompts(protocol, &c_star, sigma, &rng.child("held_out"));
    let eval_rng = rng.child("eval");
    let records: Vec<PromptRecord> = prompts
        .par_iter()
        .enumerate()
        .map(|(n, p)| {
            let r = eval_rng.child_indexed("prompt", n as u64);
            let clean_loss = loss_at_prompt(&clean_model, clean, &p.c, protocol.eval_draws, &r)?;
            let protected_loss = loss_at_prompt(&prot_model, clean, &p.c, protocol.eval_draws, &r)?;
            let (mut cd, mut pd) = (0.0, 0.0);
            for s in 0..protocol.samples_per_prompt {
                let sr = r.child_indexed("sample", s as u64);
                cd += nearest_distance(&ddpm_sample(&clean_model, &p.c, &mut sr.clone())?, clean);
                pd += nearest_distance(&ddpm_sample(&prot_model, &p.c, &mut sr.clone())?, clean);
            }
            let ns = protocol.samples_per_prompt.max(1) as f64;
            Ok(PromptRecord {
                category: p.category,
                index: p.index,
                radius: p.radius,
                clean_loss,
                protected_loss,
                clean_deviation: cd / ns,
                protected_deviation: pd / ns,
            })
        })
        .collect::<Result<_>>()?;

    let categories = (0..protocol.categories)
        .map(|k| {
            let rs: Vec<&PromptRecord> = records.iter().filter(|r| r.category == k).collect();
            let f = |g: fn(&PromptRecord) -> f64| mean(&rs.iter().map(|r| g(r)).collect::<Vec<_>>());
            let clean_loss = f(|r| r.clean_loss);
            let protected_loss = f(|r| r.protected_loss);
            CategorySummary {
                category: k,
                radius: rs[0].radius,
                clean_loss,
                protected_loss,
                loss_gap: protected_loss - clean_loss,
                deviation_gap: f(|r| r.protected_deviation) - f(|r| r.clean_deviation),
            }
        })
        .collect();
    let col = |g: fn(&PromptRecord) -> f64| records.iter().map(g).collect::<Vec<_>>();
    let clean_loss = Aggregate::of(&col(|r| r.clean_loss));
    let protected_loss = Aggregate::of(&col(|r| r.protected_loss));
    let clean_deviation = Aggregate::of(&col(|r| r.clean_deviation));
    let protected_deviation = Aggregate::of(&col(|r| r.protected_deviation));
    Ok(ProtectionReport {
        protocol: protocol.clone(),
        seed: rng.key(),
        sigma,
        loss_gap: protected_loss.mean - clean_loss.mean,
        deviation_gap: protected_deviation.mean - clean_deviation.mean,
        prompts: records,
        categories,
        clean_loss,
        protected_loss,
        clean_deviation,
        protected_deviation,
    })
}
