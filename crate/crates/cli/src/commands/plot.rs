use std::path::PathBuf;

use clap::Args;

use super::evaluate::EvaluationReport;
use crate::config::read_text;
use crate::error::{CliError, CliResult};
use crate::io::{require_path, write_text};
use crate::manifest::Outputs;
use crate::plot::{render, Chart, Series};
use crate::Common;

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,
    /// `report.json` written by `evaluate`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn charts(report: &EvaluationReport) -> Vec<Chart> {
    let labels: Vec<String> = report
        .methods
        .first()
        .map(|m| m.cells.iter().map(|c| format!("{}x{}", c.categories, c.per_category)).collect())
        .unwrap_or_default();
    let series = |f: fn(&super::evaluate::CellResult) -> f64| {
        report
            .methods
            .iter()
            .map(|m| Series {
                name: m.method.clone(),
                values: m.cells.iter().map(f).collect(),
            })
            .collect()
    };
    vec![
        Chart {
            title: "Held-out prompt loss gap".into(),
            y_label: "protected - clean loss".into(),
            x_labels: labels.clone(),
            series: series(|c| c.mean_loss_gap),
        },
        Chart {
            title: "Sample deviation gap".into(),
            y_label: "protected - clean L2".into(),
            x_labels: labels,
            series: series(|c| c.mean_deviation_gap),
        },
    ]
}

pub fn run(a: PlotArgs, env_seed: Option<&str>) -> CliResult<()> {
    let (cfg, out) = a.common.resolve(env_seed)?;
    let path = require_path(&a.report, "--report")?;
    let report: EvaluationReport = serde_json::from_str(&read_text(&path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut o = Outputs::new(out)?;
    o.input("--report", &path);
    write_text(&o.file("prompt_grid.svg")?, &render(&charts(&report)))?;
    o.finish("plot", &cfg)?;
    Ok(())
}
