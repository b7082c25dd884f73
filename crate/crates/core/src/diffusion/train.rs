use serde::{Deserialize, Serialize};

use super::dataset::ToyDataset;
use super::model::{DenoiserParams, ModelDims, ToyModel};
use super::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub time_dim: usize,
    /// (t, eps) draws per item when measuring the evaluation loss.
    pub eval_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            hidden: 128,
            time_dim: 8,
            eval_draws: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: ToyModel,
    /// Evaluation loss before the first epoch.
    pub initial_loss: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Evaluation loss after the last epoch, on the same draws as `initial_loss`.
    pub final_loss: f64,
}

/// One SGD step on the diffusion loss for a single (image, prompt) pair with a
/// fresh (t, eps) draw. Returns the loss before the update.
pub fn sgd_step(model: &mut ToyModel, x0: &Image, c: &[f64], lr: f64, rng: &mut Rng) -> Result<f64> {
    let t = rng.timestep(model.steps());
    let eps = rng.gaussian_vec(x0.len());
    let g = model.loss_grad(x0, &eps, t, c, true)?;
    let grad = g.d_params.expect("requested parameter gradients");
    model.params.sgd_step(&grad, lr);
    Ok(g.loss)
}

/// Mean diffusion loss over `draws` fixed (t, eps) samples per pair.
pub fn mean_loss(
    model: &ToyModel,
    pairs: &[(&Image, &[f64])],
    draws: usize,
    rng: &Rng,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, (x0, c)) in pairs.iter().enumerate() {
        let mut r = rng.child_indexed("pair", i as u64);
        for _ in 0..draws {
            let t = r.timestep(model.steps());
            let eps = r.gaussian_vec(x0.len());
            total += model.loss(x0, &eps, t, c)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Train the toy denoiser with per-item SGD on the diffusion loss.
pub fn train_toy(
    dataset: &ToyDataset,
    schedule: ScheduleConfig,
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<TrainReport> {
    if dataset.items.is_empty() {
        return Err(Error::invalid("dataset", "must be non-empty"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid("lr", "must be positive"));
    }
    let dims = ModelDims {
        height: dataset.spec.image_size,
        width: dataset.spec.image_size,
        embed_dim: dataset.spec.embed_dim,
        time_dim: cfg.time_dim,
        hidden: cfg.hidden,
    };
    let params = DenoiserParams::init(dims, &mut rng.child("init"));
    let mut model = ToyModel::new(params, schedule)?;

    let pairs: Vec<(&Image, &[f64])> = dataset
        .items
        .iter()
        .map(|i| (&i.image, i.embedding.as_slice()))
        .collect();
    let eval_rng = rng.child("eval");
    let initial_loss = mean_loss(&model, &pairs, cfg.eval_draws, &eval_rng)?;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut r = rng.child_indexed("epoch", epoch as u64);
        r.shuffle(&mut order);
        let mut sum = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let (x0, c) = pairs[i];
            let loss = sgd_step(&mut model, x0, c, cfg.lr, &mut r)?;
            if !loss.is_finite() || !model.params.is_finite() {
                return Err(Error::Diverged {
                    step: epoch * pairs.len() + step,
                    loss,
                    trace: epoch_losses,
                });
            }
            sum += loss;
        }
        epoch_losses.push(sum / pairs.len() as f64);
    }

    let final_loss = mean_loss(&model, &pairs, cfg.eval_draws, &eval_rng)?;
    Ok(TrainReport {
        model,
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::dataset::{generate_dataset, ToyDatasetSpec};

    fn tiny() -> ToyDataset {
        generate_dataset(&ToyDatasetSpec {
            count: 4,
            image_size: 6,
            embed_dim: 4,
            seed: 2,
        })
        .unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden: 16,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = tiny();
        let rng = Rng::new(5);
        let report = train_toy(&data, ScheduleConfig::default(), &cfg(0), &rng).unwrap();
        let dims = *report.model.dims();
        let init = DenoiserParams::init(dims, &mut rng.child("init"));
        assert_eq!(report.model.params, init);
        assert!(report.epoch_losses.is_empty());
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn deterministic() {
        let data = tiny();
        let a = train_toy(&data, ScheduleConfig::default(), &cfg(3), &Rng::new(1)).unwrap();
        let b = train_toy(&data, ScheduleConfig::default(), &cfg(3), &Rng::new(1)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn divergence_is_reported() {
        let data = tiny();
        let mut c = cfg(50);
        c.lr = 1e6;
        match train_toy(&data, ScheduleConfig::default(), &c, &Rng::new(1)) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
