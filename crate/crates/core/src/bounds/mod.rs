//! Numerical checks of the approximation bounds behind the prompt model.

pub mod cosine;
pub mod folded;
pub mod laplace;
pub mod single_sample;
pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::Rng;

pub use cosine::{
    cosine_bound_grid, cosine_similarity_lower_bound, empirical_cosine_dissimilarity, grid_csv,
    matched_sigma_sq, sample_constrained_hessian, verify_cosine_dominance, GridPoint,
};
pub use folded::{folded_normal_monte_carlo, folded_normal_stats, FoldedNormalParams, Moments};
pub use laplace::{laplace_probe, loglog_slope, LaplaceConfig, LaplaceFit, LogDensity};
pub use single_sample::{single_sample_bound, verify_single_sample_bound, GKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub check: String,
    pub empirical: f64,
    pub bound: f64,
    pub tol: f64,
    /// `empirical <= bound * (1 + tol)`.
    pub pass: bool,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub notes: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn new(check: impl Into<String>, empirical: f64, bound: f64, tol: f64, trials: usize, seed: u64) -> Self {
        Self {
            check: check.into(),
            empirical,
            bound,
            tol,
            pass: empirical <= bound * (1.0 + tol),
            trials,
            seed,
            notes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.notes.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub single_sample_ns: Vec<usize>,
    pub single_sample_dim: usize,
    pub single_sample_trials: usize,
    pub lipschitz: f64,
    pub folded_mus: Vec<f64>,
    pub folded_sigmas: Vec<f64>,
    pub folded_samples: usize,
    pub cosine_n: usize,
    pub cosine_l: f64,
    pub cosine_d: f64,
    pub cosine_draws: usize,
    pub laplace_tilt: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            single_sample_ns: vec![10, 100, 1000],
            single_sample_dim: 4,
            single_sample_trials: 10_000,
            lipschitz: 1.0,
            folded_mus: vec![-2.0, 0.0, 1.0, 3.0],
            folded_sigmas: vec![0.5, 1.0, 2.0],
            folded_samples: 10_000_000,
            cosine_n: 51_396,
            cosine_l: 0.05,
            cosine_d: 12.5,
            cosine_draws: 1000,
            laplace_tilt: 0.05,
        }
    }
}

/// Tolerance on the Laplace error slope, which should be 3.
pub const LAPLACE_SLOPE_TOL: f64 = 0.2;
/// Closed-form and sampled folded-normal means must agree within this many
/// standard errors.
pub const FOLDED_SE: f64 = 3.0;

/// Every check, each on its own child stream of `rng`.
pub fn run_suite(cfg: &SuiteConfig, rng: &Rng) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();

    let r = rng.child("folded");
    for (i, &mu) in cfg.folded_mus.iter().enumerate() {
        for (j, &sigma) in cfg.folded_sigmas.iter().enumerate() {
            let p = FoldedNormalParams::new(mu, sigma)?;
            let stream = r.child_indexed("mu", i as u64).child_indexed("sigma", j as u64);
            let closed = folded_normal_stats(p)?;
            let mc = folded_normal_monte_carlo(p, cfg.folded_samples, &stream)?;
            let bound = FOLDED_SE * mc.std_error;
            out.push(
                BoundReport::new(
                    format!("folded_normal/mu={mu}/sigma={sigma}"),
                    (closed.mean - mc.mean).abs(),
                    bound,
                    0.0,
                    cfg.folded_samples,
                    stream.key(),
                )
                .with("closed_mean", closed.mean)
                .with("closed_variance", closed.variance)
                .with("mc_mean", mc.mean)
                .with("mc_std_error", mc.std_error),
            );
        }
    }

    let r = rng.child("single_sample");
    for kind in [GKind::L1Norm, GKind::Linear] {
        for &n in &cfg.single_sample_ns {
            let stream = r.child(kind.name()).child_indexed("n", n as u64);
            let (report, _) = verify_single_sample_bound(
                cfg.lipschitz,
                n,
                cfg.single_sample_dim,
                &kind,
                cfg.single_sample_trials,
                &stream,
            )?;
            out.push(report);
        }
    }

    let similarity = cosine_similarity_lower_bound(cfg.cosine_n, cfg.cosine_l, cfg.cosine_d)?;
    let (report, _) = verify_cosine_dominance(
        cfg.cosine_n,
        cfg.cosine_l,
        cfg.cosine_d,
        cfg.cosine_draws,
        &rng.child("cosine"),
    )?;
    out.push(report.with("similarity_lower_bound", similarity));

    let target = LogDensity::Skewed {
        mode: vec![0.0, 0.0],
        variance: 1.0,
        tilt: cfg.laplace_tilt,
    };
    let fit = laplace_probe(&target, &[0.2, -0.1], &LaplaceConfig::default())?;
    let slope = loglog_slope(&fit.error_curve)?;
    out.push(
        BoundReport::new("laplace_slope", (slope - 3.0).abs(), LAPLACE_SLOPE_TOL, 0.0, 1, rng.key())
            .with("slope", slope)
            .with("iterations", fit.iterations as f64),
    );
    Ok(out)
}
