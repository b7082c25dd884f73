use std::path::PathBuf;

use clap::Args;
use pap_core::attack::{protect, AttackConfig, AttackMode};
use pap_core::{Image, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::set;
use crate::error::{CliError, CliResult};
use crate::io::{load_images, load_model, load_vector, require_path, write_json, write_png};
use crate::manifest::Outputs;
use crate::Common;

pub const OUTPUT_IMAGES: &str = "x_adv.papt";
pub const RUN_RECORD: &str = "run.json";

#[derive(Debug, Clone, Args)]
pub struct ProtectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Image or image batch (PAPT, PNG or a directory of them).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Prompt embedding c0 (PAPT vector).
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// pap, specific, tanh or aspap.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Attack iterations per round.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub text_steps: Option<usize>,
    #[arg(long)]
    pub text_lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// AS-PAP rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// AS-PAP surrogate steps per round.
    #[arg(long)]
    pub surrogate_steps: Option<usize>,
    /// AS-PAP surrogate learning rate.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: usize,
    pub linf: f64,
    pub losses: Vec<f64>,
    pub prompts: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub degenerate_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: AttackMode,
    pub config: AttackConfig,
    pub seed: u64,
    pub images: Vec<ImageRecord>,
    pub output: String,
}

pub fn apply_flags(cfg: &mut AttackConfig, a: &ProtectArgs) -> CliResult<()> {
    if let Some(m) = &a.mode {
        cfg.mode = AttackMode::parse(m).map_err(|_| {
            CliError::Validation(format!("--mode {m:?}: expected pap, specific, tanh or aspap"))
        })?;
    }
    set(&mut cfg.eta, a.eta);
    set(&mut cfg.alpha, a.alpha);
    set(&mut cfg.steps, a.steps);
    set(&mut cfg.text_steps, a.text_steps);
    set(&mut cfg.text_lr, a.text_lr);
    set(&mut cfg.momentum, a.momentum);
    set(&mut cfg.rounds, a.rounds);
    set(&mut cfg.surrogate_steps, a.surrogate_steps);
    set(&mut cfg.gamma, a.gamma);
    Ok(())
}

pub fn run(a: ProtectArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (mut cfg, out) = a.common.resolve(env_seed)?;
    apply_flags(&mut cfg.attack, &a)?;
    cfg.validate()?;
    let model_dir = require_path(&a.model, "--model")?;
    let image_path = require_path(&a.image, "--image")?;
    let prompt_path = require_path(&a.prompt, "--prompt")?;

    let model = load_model(&model_dir)?;
    let images = load_images(&image_path)?;
    let c0 = load_vector(&prompt_path)?;
    let rng = Rng::new(cfg.seeds.base).child("protect");
    let attack = cfg.attack;
    let results = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| protect(&model, x, &c0, &attack, &rng.child_indexed("image", i as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut o = Outputs::new(out)?;
    o.input("--model", &model_dir);
    o.input("--image", &image_path);
    o.input("--prompt", &prompt_path);
    let adv: Vec<Image> = results.iter().map(|(r, _)| r.x_adv.clone()).collect();
    Image::batch_to_tensor(&adv)?.write(o.file(OUTPUT_IMAGES)?)?;
    for (i, img) in adv.iter().enumerate() {
        write_png(&o.file(&format!("preview/x_adv_{i:03}.png"))?, img)?;
    }
    for (i, (_, surrogate)) in results.iter().enumerate() {
        if let Some(m) = surrogate {
            let rel = format!("surrogate/{i:03}");
            m.save(o.dir.join(&rel), cfg.seeds.base)?;
            o.dir_files(&rel)?;
        }
    }
    let record = RunRecord {
        mode: attack.mode,
        config: attack,
        seed: cfg.seeds.base,
        images: results
            .iter()
            .enumerate()
            .map(|(index, (r, _))| ImageRecord {
                index,
                linf: r.linf,
                losses: r.losses(),
                prompts: r.trace.iter().map(|t| t.prompt.clone()).collect(),
                variances: r.trace.iter().map(|t| t.variance).collect(),
                degenerate_iterations: r.trace.iter().filter(|t| t.degenerate).count(),
            })
            .collect(),
        output: OUTPUT_IMAGES.into(),
    };
    write_json(&o.file(RUN_RECORD)?, &record)?;
    let worst = record.images.iter().map(|r| r.linf).fold(0.0, f64::max);
    println!("protected {} image(s) with {}: max L-inf {:.6}", adv.len(), attack.mode.name(), worst);
    o.finish("protect", &cfg)?;
    Ok(())
}
