//! A small conditional denoising-diffusion testbed: schedule, MLP noise
//! predictor with analytic gradients, synthetic data, training and sampling.

pub mod dataset;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod train;

pub use dataset::{generate_dataset, render, EMBEDDING_JITTER, ToyDataset, ToyDatasetSpec, ToyItem};
pub use model::{denoiser_forward, diffusion_loss, loss_grad, DenoiserParams, LossGrad, ModelDims, ToyModel};
pub use sample::ddpm_sample;
pub use schedule::{forward_noise, make_schedule, NoiseSchedule, ScheduleConfig};
pub use train::{mean_loss, sgd_step, train_toy, TrainConfig, TrainReport};
