use std::path::PathBuf;

use clap::Args;
use pap_core::prompt::model_prompt_distribution;
use pap_core::Rng;
use serde::Serialize;

use super::set;
use crate::error::CliResult;
use crate::io::{load_images, load_model, load_vector, require_path, save_vector, write_json};
use crate::manifest::Outputs;
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Images (PAPT, PNG or a directory of them).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Starting prompt embedding (PAPT vector).
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    #[arg(long)]
    pub text_steps: Option<usize>,
    #[arg(long)]
    pub text_lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
}

#[derive(Serialize)]
struct DistributionRecord {
    mean: String,
    variance: f64,
    degenerate: bool,
    raw_delta: f64,
    best_iteration: usize,
    trace: Vec<f64>,
}

pub fn run(a: EstimateArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (mut cfg, out) = a.common.resolve(env_seed)?;
    set(&mut cfg.distribution.steps, a.text_steps);
    set(&mut cfg.distribution.lr, a.text_lr);
    set(&mut cfg.distribution.momentum, a.momentum);
    cfg.validate()?;
    let model_dir = require_path(&a.model, "--model")?;
    let images_path = require_path(&a.images, "--images")?;
    let prompt_path = require_path(&a.prompt, "--prompt")?;

    let model = load_model(&model_dir)?;
    let images = load_images(&images_path)?;
    let c0 = load_vector(&prompt_path)?;
    let rng = Rng::new(cfg.seeds.base).child("distribution");
    let m = model_prompt_distribution(&model, &images, &c0, &cfg.distribution, &rng)?;

    let mut o = Outputs::new(out)?;
    o.input("--model", &model_dir);
    o.input("--images", &images_path);
    o.input("--prompt", &prompt_path);
    save_vector(&o.file("mean.papt")?, &m.gaussian.mean)?;
    write_json(
        &o.file("distribution.json")?,
        &DistributionRecord {
            mean: "mean.papt".into(),
            variance: m.gaussian.variance,
            degenerate: m.estimate.degenerate,
            raw_delta: m.estimate.raw_delta,
            best_iteration: m.trace.best,
            trace: m.trace.losses(),
        },
    )?;
    println!(
        "variance {:.6e} (best iterate {}, loss {:.4} -> {:.4}{})",
        m.gaussian.variance,
        m.trace.best,
        m.trace.initial_loss(),
        m.trace.best_loss(),
        if m.estimate.degenerate { ", degenerate" } else { "" }
    );
    o.finish("estimate-dist", &cfg)?;
    Ok(())
}
