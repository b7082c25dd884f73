use clap::Args;
use pap_core::bounds::{cosine_bound_grid, grid_csv, run_suite, SuiteConfig};
use pap_core::Rng;

use crate::error::{CliError, CliResult};
use crate::io::{write_json, write_text};
use crate::manifest::Outputs;
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Bound-suite settings (JSON); defaults to the full suite.
    #[arg(long)]
    pub suite: Option<std::path::PathBuf>,
    /// Also write the cosine bound over a (D, l) grid as CSV.
    #[arg(long)]
    pub grid_csv: bool,
}

const GRID_LS: [f64; 7] = [0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1];

pub fn run(a: VerifyArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (cfg, out) = a.common.resolve(env_seed)?;
    cfg.validate()?;
    let suite: SuiteConfig = match &a.suite {
        Some(p) => serde_json::from_str(&crate::config::read_text(p)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?,
        None => SuiteConfig::default(),
    };
    let reports = run_suite(&suite, &Rng::new(cfg.seeds.base).child("bounds"))?;

    let mut o = Outputs::new(out)?;
    if let Some(p) = &a.suite {
        o.input("--suite", p);
    }
    write_json(&o.file("bounds.json")?, &reports)?;
    if a.grid_csv {
        let ds: Vec<f64> = (1..=120).map(|k| 0.5 * k as f64).collect();
        let grid = cosine_bound_grid(suite.cosine_n, &GRID_LS, &ds);
        write_text(&o.file("cosine_grid.csv")?, &grid_csv(&grid))?;
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    for r in &reports {
        println!(
            "{} {}: {:.6} vs {:.6}",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.empirical,
            r.bound
        );
    }
    println!("{passed}/{} checks pass", reports.len());
    o.finish("verify-bounds", &cfg)?;
    Ok(())
}
