use std::path::{Path, PathBuf};

use clap::Args;
use pap_core::diffusion::ToyModel;
use pap_core::eval::{evaluate_protection, modeled_sigma, EvalProtocol, ProtectionReport, Transform, PROMPT_GRID};
use pap_core::stats::mean;
use pap_core::{Image, Rng};
use serde::{Deserialize, Serialize};

use super::protect::{RunRecord, OUTPUT_IMAGES, RUN_RECORD};
use super::set;
use crate::config::read_text;
use crate::error::{CliError, CliResult};
use crate::io::{load_images, load_model, load_vector, require_path, write_json, write_text};
use crate::manifest::Outputs;
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The unprotected images.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Protected images: a `protect` output directory or an image file.
    /// Repeat to compare several methods.
    #[arg(long)]
    pub protected: Vec<PathBuf>,
    /// Pseudo-prompt used for fine-tuning (PAPT vector).
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// Evaluation protocol (JSON); replaces the config's `eval` section.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Number of evaluation seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Evaluate every cell of the prompt-variation grid.
    #[arg(long)]
    pub grid: bool,
    /// Gaussian blur kernel applied to both image sets before fine-tuning.
    #[arg(long)]
    pub blur: Option<usize>,
    /// Round images to 8 bits before fine-tuning.
    #[arg(long)]
    pub quantize: bool,
    #[arg(long)]
    pub finetune_steps: Option<usize>,
    #[arg(long)]
    pub samples_per_prompt: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: usize,
    pub report: ProtectionReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub categories: usize,
    pub per_category: usize,
    pub mean_loss_gap: f64,
    pub mean_deviation_gap: f64,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub source: String,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: EvalProtocol,
    pub base_seed: u64,
    pub seeds: usize,
    pub methods: Vec<MethodResult>,
}

/// Images of a protect output directory (with its method name), or of any
/// other image path (named after the file).
fn load_protected(path: &Path) -> CliResult<(String, Vec<Image>)> {
    if path.is_dir() && path.join(RUN_RECORD).is_file() {
        let record: RunRecord = serde_json::from_str(&read_text(&path.join(RUN_RECORD))?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.join(RUN_RECORD).display())))?;
        let images = load_images(&path.join(OUTPUT_IMAGES))?;
        return Ok((record.mode.name().to_string(), images));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "protected".into());
    Ok((name, load_images(path)?))
}

pub fn evaluate_methods(
    model: &ToyModel,
    clean: &[Image],
    methods: &[(String, String, Vec<Image>)],
    protocol: &EvalProtocol,
    cells: &[(usize, usize)],
    base_seed: u64,
    seeds: usize,
) -> CliResult<EvaluationReport> {
    let c_star = protocol
        .pseudo_prompt
        .clone()
        .ok_or_else(|| CliError::missing("--prompt"))?;
    let root = Rng::new(base_seed).child("evaluate");
    let mut per_seed = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let rng = root.child_indexed("seed", s as u64);
        let mut p = protocol.clone();
        if p.sigma.is_none() {
            p.sigma = Some(modeled_sigma(model, clean, &c_star, &rng.child("sigma"))?);
        }
        per_seed.push((rng, p));
    }
    let mut out = Vec::new();
    for (method, source, images) in methods {
        let mut cell_results = Vec::new();
        for &(k, n) in cells {
            let mut runs = Vec::with_capacity(seeds);
            for (s, (rng, p)) in per_seed.iter().enumerate() {
                let report = evaluate_protection(model, clean, images, &p.with_cell(k, n), rng)?;
                runs.push(SeedRun { seed: s, report });
            }
            let gaps: Vec<f64> = runs.iter().map(|r| r.report.loss_gap).collect();
            let dev: Vec<f64> = runs.iter().map(|r| r.report.deviation_gap).collect();
            cell_results.push(CellResult {
                categories: k,
                per_category: n,
                mean_loss_gap: mean(&gaps),
                mean_deviation_gap: mean(&dev),
                runs,
            });
        }
        out.push(MethodResult {
            method: method.clone(),
            source: source.clone(),
            cells: cell_results,
        });
    }
    Ok(EvaluationReport {
        protocol: protocol.clone(),
        base_seed,
        seeds,
        methods: out,
    })
}

pub fn report_csv(report: &EvaluationReport) -> String {
    let mut s = String::from(
        "method,categories,per_category,seed,sigma,clean_loss,protected_loss,loss_gap,clean_deviation,protected_deviation,deviation_gap\n",
    );
    for m in &report.methods {
        for c in &m.cells {
            for r in &c.runs {
                let p = &r.report;
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    m.method,
                    c.categories,
                    c.per_category,
                    r.seed,
                    p.sigma,
                    p.clean_loss.mean,
                    p.protected_loss.mean,
                    p.loss_gap,
                    p.clean_deviation.mean,
                    p.protected_deviation.mean,
                    p.deviation_gap
                ));
            }
        }
    }
    s
}

pub fn run(a: EvaluateArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (mut cfg, out) = a.common.resolve(env_seed)?;
    if let Some(p) = &a.protocol {
        cfg.eval = serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
    }
    set(&mut cfg.seeds.eval, a.seeds);
    set(&mut cfg.eval.finetune_steps, a.finetune_steps);
    set(&mut cfg.eval.samples_per_prompt, a.samples_per_prompt);
    if let Some(k) = a.blur {
        cfg.eval.transform = Transform::GaussianBlur { kernel: k };
    }
    if a.quantize {
        cfg.eval.quantize = true;
    }
    let model_dir = require_path(&a.model, "--model")?;
    let clean_path = require_path(&a.clean, "--clean")?;
    if a.protected.is_empty() {
        return Err(CliError::missing("--protected"));
    }
    if let Some(p) = &a.prompt {
        let p = require_path(&Some(p.clone()), "--prompt")?;
        cfg.eval.pseudo_prompt = Some(load_vector(&p)?);
    }
    if cfg.eval.pseudo_prompt.is_none() {
        return Err(CliError::missing("--prompt"));
    }
    cfg.validate()?;

    let model = load_model(&model_dir)?;
    let clean = load_images(&clean_path)?;
    let mut methods = Vec::new();
    for p in &a.protected {
        let p = require_path(&Some(p.clone()), "--protected")?;
        let (name, images) = load_protected(&p)?;
        methods.push((name, p.display().to_string(), images));
    }
    let cells: Vec<(usize, usize)> = if a.grid {
        PROMPT_GRID.to_vec()
    } else {
        vec![(cfg.eval.categories, cfg.eval.per_category)]
    };
    let report = evaluate_methods(&model, &clean, &methods, &cfg.eval, &cells, cfg.seeds.base, cfg.seeds.eval)?;

    let mut o = Outputs::new(out)?;
    o.input("--model", &model_dir);
    o.input("--clean", &clean_path);
    if let Some(p) = &a.prompt {
        o.input("--prompt", p);
    }
    for (i, (_, source, _)) in methods.iter().enumerate() {
        o.input(&format!("--protected[{i}]"), Path::new(source));
    }
    write_json(&o.file("report.json")?, &report)?;
    write_text(&o.file("report.csv")?, &report_csv(&report))?;
    for m in &report.methods {
        for c in &m.cells {
            println!(
                "{:>8} {:>2}x{:<2} loss gap {:+.4}  deviation gap {:+.4}",
                m.method, c.categories, c.per_category, c.mean_loss_gap, c.mean_deviation_gap
            );
        }
    }
    o.finish("evaluate", &cfg)?;
    Ok(())
}
