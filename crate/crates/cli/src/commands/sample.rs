use std::path::PathBuf;

use clap::Args;
use pap_core::diffusion::ddpm_sample;
use pap_core::{Image, Rng};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::io::{load_model, load_vector, require_path, write_png};
use crate::manifest::Outputs;
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Prompt embedding (PAPT vector).
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
}

pub fn run(a: SampleArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (cfg, out) = a.common.resolve(env_seed)?;
    cfg.validate()?;
    if a.count == 0 {
        return Err(CliError::Validation("--count must be at least 1".into()));
    }
    let model_dir = require_path(&a.model, "--model")?;
    let prompt_path = require_path(&a.prompt, "--prompt")?;
    let model = load_model(&model_dir)?;
    let c = load_vector(&prompt_path)?;
    let rng = Rng::new(cfg.seeds.base).child("sample");
    let samples = (0..a.count)
        .into_par_iter()
        .map(|i| ddpm_sample(&model, &c, &mut rng.child_indexed("sample", i as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut o = Outputs::new(out)?;
    o.input("--model", &model_dir);
    o.input("--prompt", &prompt_path);
    Image::batch_to_tensor(&samples)?.write(o.file("samples.papt")?)?;
    for (i, s) in samples.iter().enumerate() {
        write_png(&o.file(&format!("preview/sample_{i:03}.png"))?, s)?;
    }
    println!("wrote {} sample(s)", samples.len());
    o.finish("sample", &cfg)?;
    Ok(())
}
