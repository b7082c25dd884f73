//! The `pap` command-line tool: train the toy model, fit prompt distributions,
//! protect images, evaluate protections and check the bounds.

mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};

pub use commands::{
    EstimateArgs, EvaluateArgs, PlotArgs, ProtectArgs, SampleArgs, TrainArgs, VerifyArgs,
};

#[derive(Debug, Parser)]
#[command(name = "pap", version, about = "Prompt-agnostic adversarial protection on a toy diffusion model")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy denoiser and export its dataset and a subject photo set.
    TrainToy(TrainArgs),
    /// Fit the prompt distribution of a set of images.
    EstimateDist(EstimateArgs),
    /// Perturb images against fine-tuning.
    Protect(ProtectArgs),
    /// Compare fine-tuning on clean and protected images.
    Evaluate(EvaluateArgs),
    /// Run the numerical bound checks.
    VerifyBounds(VerifyArgs),
    /// Draw DDPM samples for a prompt.
    Sample(SampleArgs),
    /// Render an evaluation report as SVG charts.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Output directory; every file the command writes goes here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration (JSON), or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    /// Flag over config file over `PAP_SEED` over built-in default.
    pub(crate) fn resolve(&self, env_seed: Option<&str>) -> CliResult<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, env_seed)?,
            None => RunConfig::defaults(env_seed)?,
        };
        if let Some(s) = self.seed {
            cfg.seeds.base = s;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| CliError::missing("--out"))?;
        Ok((cfg, out))
    }
}

/// Run the tool on `argv` (including the program name) and return the exit
/// code: 0 on success, 1 for invalid input, 2 when the run fails.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with_env(argv, env_seed.as_deref())
}

pub fn run_with_env<I, T>(argv: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, env_seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, env_seed: Option<&str>) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::TrainToy(a) => commands::train::run(a, env_seed),
        Command::EstimateDist(a) => commands::estimate::run(a, env_seed),
        Command::Protect(a) => commands::protect::run(a, env_seed),
        Command::Evaluate(a) => commands::evaluate::run(a, env_seed),
        Command::VerifyBounds(a) => commands::bounds::run(a, env_seed),
        Command::Sample(a) => commands::sample::run(a, env_seed),
        Command::Plot(a) => commands::plot::run(a, env_seed),
    })
}
