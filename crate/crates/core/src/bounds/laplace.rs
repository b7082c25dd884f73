//! Gaussian fit at the mode of a log-density, and how fast the fit degrades
//! away from the mode.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LogDensity {
    /// `-sum (x_i - m_i)^2 / (2 v)`.
    Gaussian { mode: Vec<f64>, variance: f64 },
    /// Gaussian plus a cubic tilt `tilt * sum (x_i - m_i)^3`.
    Skewed { mode: Vec<f64>, variance: f64, tilt: f64 },
    Custom { dim: usize, f: LogDensityFn },
}

impl fmt::Debug for LogDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogDensity::Gaussian { mode, variance } => write!(f, "Gaussian({mode:?}, {variance})"),
            LogDensity::Skewed { mode, variance, tilt } => write!(f, "Skewed({mode:?}, {variance}, {tilt})"),
            LogDensity::Custom { dim, .. } => write!(f, "Custom(dim={dim})"),
        }
    }
}

impl LogDensity {
    pub fn dim(&self) -> usize {
        match self {
            LogDensity::Gaussian { mode, .. } | LogDensity::Skewed { mode, .. } => mode.len(),
            LogDensity::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            LogDensity::Gaussian { mode, variance } => {
                -x.iter().zip(mode).map(|(a, m)| (a - m).powi(2)).sum::<f64>() / (2.0 * variance)
            }
            LogDensity::Skewed { mode, variance, tilt } => x
                .iter()
                .zip(mode)
                .map(|(a, m)| {
                    let d = a - m;
                    -d * d / (2.0 * variance) + tilt * d * d * d
                })
                .sum(),
            LogDensity::Custom { f, .. } => f(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceConfig {
    pub step: f64,
    pub iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub grad_h: f64,
    pub hessian_h: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_count: usize,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            iters: 10_000,
            grad_tol: 1e-10,
            grad_h: 1e-5,
            hessian_h: 1e-3,
            rho_min: 0.01,
            rho_max: 0.3,
            rho_count: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub rho: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFit {
    pub mode: Vec<f64>,
    pub log_density_at_mode: f64,
    /// Hessian of the log-density at the mode, row-major.
    pub hessian: Vec<f64>,
    /// `(-H)^-1`, row-major.
    pub covariance: Vec<f64>,
    pub iterations: usize,
    pub error_curve: Vec<ErrorPoint>,
}

impl LaplaceFit {
    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    /// Diagonal of the covariance.
    pub fn variance(&self) -> Vec<f64> {
        let k = self.dim();
        (0..k).map(|i| self.covariance[i * k + i]).collect()
    }

    /// `log p(mode) + (x - mode)^T H (x - mode) / 2`.
    pub fn log_fit(&self, x: &[f64]) -> f64 {
        let k = self.dim();
        let d: Vec<f64> = x.iter().zip(&self.mode).map(|(a, m)| a - m).collect();
        let mut q = 0.0;
        for i in 0..k {
            for j in 0..k {
                q += d[i] * self.hessian[i * k + j] * d[j];
            }
        }
        self.log_density_at_mode + 0.5 * q
    }
}

fn gradient(f: &LogDensity, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f.eval(&y);
            y[i] = x[i] - h;
            let down = f.eval(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn hessian(f: &LogDensity, x: &[f64], h: f64) -> Vec<f64> {
    let k = x.len();
    let f0 = f.eval(x);
    let mut y = x.to_vec();
    let at = |y: &mut Vec<f64>, i: usize, a: f64, j: usize, b: f64| {
        y[i] += a;
        y[j] += b;
        let v = f.eval(y);
        y[i] = x[i];
        y[j] = x[j];
        v
    };
    let mut hm = vec![0.0; k * k];
    for i in 0..k {
        let up = at(&mut y, i, h, i, 0.0);
        let down = at(&mut y, i, -h, i, 0.0);
        hm[i * k + i] = (up - 2.0 * f0 + down) / (h * h);
        for j in 0..i {
            let pp = at(&mut y, i, h, j, h);
            let pm = at(&mut y, i, h, j, -h);
            let mp = at(&mut y, i, -h, j, h);
            let mm = at(&mut y, i, -h, j, -h);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hm[i * k + j] = v;
            hm[j * k + i] = v;
        }
    }
    hm
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
fn spd_inverse(a: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum();
            if i == j {
                let d = a[i * k + i] - s;
                if !(d > 0.0) {
                    return Err(Error::Domain("Hessian is not negative definite at the mode"));
                }
                l[i * k + i] = d.sqrt();
            } else {
                l[i * k + j] = (a[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    let mut inv = vec![0.0; k * k];
    for c in 0..k {
        let mut y = vec![0.0; k];
        for i in 0..k {
            let b = if i == c { 1.0 } else { 0.0 };
            y[i] = (b - (0..i).map(|p| l[i * k + p] * y[p]).sum::<f64>()) / l[i * k + i];
        }
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|p| l[p * k + i] * inv[p * k + c]).sum();
            inv[i * k + c] = (y[i] - s) / l[i * k + i];
        }
    }
    Ok(inv)
}

/// Log-spaced radii from `rho_min` to `rho_max`.
pub fn rho_grid(cfg: &LaplaceConfig) -> Vec<f64> {
    let n = cfg.rho_count;
    if n == 1 {
        return vec![cfg.rho_min];
    }
    let (a, b) = (cfg.rho_min.ln(), cfg.rho_max.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Directions probed at each radius: both signs of every axis and of the
/// main diagonal.
fn directions(k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * k + 2);
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; k];
            e[i] = s;
            out.push(e);
        }
    }
    if k > 1 {
        let v = 1.0 / (k as f64).sqrt();
        out.push(vec![v; k]);
        out.push(vec![-v; k]);
    }
    out
}

/// Gradient ascent to the mode, finite-difference Hessian there, and the
/// largest `|log p - log fit|` on each probed sphere.
pub fn laplace_probe(target: &LogDensity, init: &[f64], cfg: &LaplaceConfig) -> Result<LaplaceFit> {
    let k = target.dim();
    if init.len() != k || k == 0 {
        return Err(Error::Shape {
            what: "initial point",
            expected: vec![k],
            got: vec![init.len()],
        });
    }
    if !(cfg.step > 0.0 && cfg.grad_h > 0.0 && cfg.hessian_h > 0.0) {
        return Err(Error::invalid("step", "step sizes must be positive"));
    }
    if !(cfg.rho_min > 0.0 && cfg.rho_max >= cfg.rho_min && cfg.rho_count > 0) {
        return Err(Error::invalid("rho", "need 0 < rho_min <= rho_max and a positive count"));
    }
    let mut x = init.to_vec();
    let mut iterations = 0;
    let mut g = gradient(target, &x, cfg.grad_h);
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    while norm(&g) >= cfg.grad_tol {
        if iterations == cfg.iters {
            return Err(Error::NoConvergence {
                iters: iterations,
                grad_norm: norm(&g),
            });
        }
        x.iter_mut().zip(&g).for_each(|(a, b)| *a += cfg.step * b);
        g = gradient(target, &x, cfg.grad_h);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence {
                iters: iterations,
                grad_norm: f64::NAN,
            });
        }
        iterations += 1;
    }
    let h = hessian(target, &x, cfg.hessian_h);
    let neg: Vec<f64> = h.iter().map(|v| -v).collect();
    let covariance = spd_inverse(&neg, k)?;
    let mut fit = LaplaceFit {
        log_density_at_mode: target.eval(&x),
        mode: x,
        hessian: h,
        covariance,
        iterations,
        error_curve: Vec::new(),
    };
    let dirs = directions(k);
    fit.error_curve = rho_grid(cfg)
        .into_iter()
        .map(|rho| {
            let error = dirs
                .iter()
                .map(|u| {
                    let p: Vec<f64> = fit.mode.iter().zip(u).map(|(m, d)| m + rho * d).collect();
                    (target.eval(&p) - fit.log_fit(&p)).abs()
                })
                .fold(0.0, f64::max);
            ErrorPoint { rho, error }
        })
        .collect();
    Ok(fit)
}

/// Least-squares slope of `ln error` against `ln rho`.
pub fn loglog_slope(curve: &[ErrorPoint]) -> Result<f64> {
    if curve.len() < 2 || curve.iter().any(|p| !(p.error > 0.0 && p.rho > 0.0)) {
        return Err(Error::invalid("error_curve", "need two or more positive points"));
    }
    let xs: Vec<f64> = curve.iter().map(|p| p.rho.ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.error.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
