//! Averaging an L1-Lipschitz function over `n` Gaussian draws versus
//! evaluating it once at the rescaled sum of those draws.
//!
//! For `x_i ~ N(0, I)` both `(1/n) sum g(x_i)` and `g(sum x_i / sqrt(n))` are
//! functions of standard normals, and the gap between them is bounded in
//! expectation by `2 L sqrt(2/pi)`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BoundReport;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::{mean, std_dev};

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum GKind {
    /// `g(x) = L ||x||_1`.
    L1Norm,
    /// `g(x) = L sum_i x_i`.
    Linear,
    /// Caller-supplied function, assumed L-Lipschitz under the L1 norm.
    Custom(CustomFn),
}

impl fmt::Debug for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl GKind {
    pub fn name(&self) -> &'static str {
        match self {
            GKind::L1Norm => "l1_norm",
            GKind::Linear => "linear",
            GKind::Custom(_) => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1_norm" | "l1" => Ok(GKind::L1Norm),
            "linear" => Ok(GKind::Linear),
            other => Err(Error::invalid("g_kind", format!("unknown built-in kind {other:?}"))),
        }
    }

    fn eval(&self, lipschitz: f64, x: &[f64]) -> f64 {
        match self {
            GKind::L1Norm => lipschitz * x.iter().map(|v| v.abs()).sum::<f64>(),
            GKind::Linear => lipschitz * x.iter().sum::<f64>(),
            GKind::Custom(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub mean_gap: f64,
    pub mean_abs_gap: f64,
    pub variance: f64,
    pub std_error: f64,
}

/// `2 L sqrt(2/pi)`.
pub fn single_sample_bound(lipschitz: f64) -> f64 {
    2.0 * lipschitz * (2.0 / std::f64::consts::PI).sqrt()
}

/// Per-trial gaps `(1/n) sum g(x_i) - g(sum x_i / sqrt(n))`.
pub fn single_sample_gaps(
    lipschitz: f64,
    n: usize,
    dim: usize,
    kind: &GKind,
    trials: usize,
    rng: &Rng,
) -> Result<Vec<f64>> {
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid("lipschitz", "must be finite and >= 0"));
    }
    if n == 0 || dim == 0 {
        return Err(Error::invalid("n", "n and dim must be positive"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok((0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng.child_indexed("trial", trial as u64);
            let mut sum = vec![0.0; dim];
            let mut avg = 0.0;
            for _ in 0..n {
                let x = r.gaussian_vec(dim);
                avg += kind.eval(lipschitz, &x);
                sum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
            }
            sum.iter_mut().for_each(|s| *s *= scale);
            avg / n as f64 - kind.eval(lipschitz, &sum)
        })
        .collect())
}

pub fn gap_stats(gaps: &[f64]) -> GapStats {
    let sd = std_dev(gaps);
    GapStats {
        mean_gap: mean(gaps),
        mean_abs_gap: mean(&gaps.iter().map(|g| g.abs()).collect::<Vec<_>>()),
        variance: sd * sd,
        std_error: sd / (gaps.len().max(1) as f64).sqrt(),
    }
}

/// Relative slack on the bound when deciding pass/fail.
pub const SINGLE_SAMPLE_TOL: f64 = 1e-2;

pub fn verify_single_sample_bound(
    lipschitz: f64,
    n: usize,
    dim: usize,
    kind: &GKind,
    trials: usize,
    rng: &Rng,
) -> Result<(BoundReport, GapStats)> {
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least two"));
    }
    let gaps = single_sample_gaps(lipschitz, n, dim, kind, trials, rng)?;
    let s = gap_stats(&gaps);
    let report = BoundReport::new(
        format!("single_sample/{}/n={n}/dim={dim}", kind.name()),
        s.mean_gap.abs(),
        single_sample_bound(lipschitz),
        SINGLE_SAMPLE_TOL,
        trials,
        rng.key(),
    )
    .with("mean_gap", s.mean_gap)
    .with("mean_abs_gap", s.mean_abs_gap)
    .with("trial_variance", s.variance)
    .with("std_error", s.std_error);
    Ok((report, s))
}
