//! How far an isotropic inverse Hessian can point from a diagonal one.
//!
//! With diagonal Hessian entries `h_i in (0, 1/l]` and `sum (1/h_i)^2 = D^2`,
//! the cosine between `(1/h_i)` and the all-equal vector is at least
//! `(sqrt(D^2 - (n-1) l^2) + (n-1) l) / (sqrt(n) D)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BoundReport;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn cosine_similarity_lower_bound(n: usize, l: f64, d: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(l > 0.0 && l.is_finite() && d > 0.0 && d.is_finite()) {
        return Err(Error::invalid("l", "l and D must be positive"));
    }
    let m = (n - 1) as f64;
    let rest = d * d - m * l * l;
    if rest < 0.0 {
        return Err(Error::Domain("D^2 < (n - 1) l^2"));
    }
    Ok((rest.sqrt() + m * l) / ((n as f64).sqrt() * d))
}

/// `1 - cos((1/h_i), (1/sigma_sq, ..., 1/sigma_sq))`.
pub fn empirical_cosine_dissimilarity(h: &[f64], sigma_sq: f64) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::invalid("h", "must be non-empty"));
    }
    if h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("h", "entries must be positive"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::invalid("sigma_sq", "must be positive"));
    }
    let s = 1.0 / sigma_sq;
    let (mut dot, mut uu) = (0.0, 0.0);
    for v in h {
        let u = 1.0 / v;
        dot += u * s;
        uu += u * u;
    }
    let cos = dot / (uu.sqrt() * s * (h.len() as f64).sqrt());
    Ok((1.0 - cos).clamp(0.0, 1.0))
}

/// A diagonal Hessian with every `h_i <= 1/l` and `sum (1/h_i)^2 = D^2`.
///
/// Writes `1/h_i = l + s w_i` with `w_i` uniform on (0, 1] and solves the
/// quadratic in `s >= 0`. Needs `D^2 >= n l^2`, the least value the
/// constraint allows.
pub fn sample_constrained_hessian(n: usize, l: f64, d: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if n == 0 || !(l > 0.0 && d > 0.0) {
        return Err(Error::invalid("n", "need n >= 1 and positive l, D"));
    }
    let nl2 = n as f64 * l * l;
    if d * d < nl2 {
        return Err(Error::Domain("D^2 < n l^2: no Hessian satisfies the constraint"));
    }
    let w: Vec<f64> = (0..n).map(|_| 1.0 - rng.uniform()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    // sw2 s^2 + 2 l sw s + (n l^2 - D^2) = 0
    let disc = (l * sw).powi(2) - sw2 * (nl2 - d * d);
    let s = (-l * sw + disc.max(0.0).sqrt()) / sw2;
    Ok(w.iter().map(|wi| 1.0 / (l + s * wi)).collect())
}

/// Harmonic-mean matching `sigma^2 = n / sum (1/h_i)`.
pub fn matched_sigma_sq(h: &[f64]) -> f64 {
    h.len() as f64 / h.iter().map(|v| 1.0 / v).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceStats {
    pub draws: usize,
    pub max_dissimilarity: f64,
    pub bound: f64,
    pub violations: usize,
}

pub fn verify_cosine_dominance(
    n: usize,
    l: f64,
    d: f64,
    draws: usize,
    rng: &Rng,
) -> Result<(BoundReport, DominanceStats)> {
    let bound = 1.0 - cosine_similarity_lower_bound(n, l, d)?;
    let dis: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let h = sample_constrained_hessian(n, l, d, &mut rng.child_indexed("draw", i as u64))?;
            empirical_cosine_dissimilarity(&h, matched_sigma_sq(&h))
        })
        .collect::<Result<_>>()?;
    let max = dis.iter().cloned().fold(0.0, f64::max);
    let stats = DominanceStats {
        draws,
        max_dissimilarity: max,
        bound,
        violations: dis.iter().filter(|v| **v > bound).count(),
    };
    let report = BoundReport::new(format!("cosine_dominance/n={n}/l={l}/D={d}"), max, bound, 0.0, draws, rng.key())
        .with("violations", stats.violations as f64);
    Ok((report, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub l: f64,
    pub d: f64,
    pub similarity: f64,
    pub dissimilarity: f64,
}

/// The bound over `ls x ds`, skipping pairs outside the domain.
pub fn cosine_bound_grid(n: usize, ls: &[f64], ds: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &l in ls {
        for &d in ds {
            if let Ok(similarity) = cosine_similarity_lower_bound(n, l, d) {
                out.push(GridPoint {
                    l,
                    d,
                    similarity,
                    dissimilarity: 1.0 - similarity,
                });
            }
        }
    }
    out
}

pub fn grid_csv(points: &[GridPoint]) -> String {
    let mut s = String::from("l,D,similarity,dissimilarity\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.l, p.d, p.similarity, p.dissimilarity));
    }
    s
}
