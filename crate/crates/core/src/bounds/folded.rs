use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::special::normal_cdf;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldedNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl FoldedNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(Error::invalid("sigma", format!("need finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of `|X|` for `X ~ N(mu, sigma^2)`:
/// `mean = sigma sqrt(2/pi) exp(-mu^2 / (2 sigma^2)) + mu (1 - 2 Phi(-mu / sigma))`,
/// `variance = mu^2 + sigma^2 - mean^2`.
pub fn folded_normal_stats(p: FoldedNormalParams) -> Result<Moments> {
    let p = FoldedNormalParams::new(p.mu, p.sigma)?;
    let (mu, s) = (p.mu, p.sigma);
    let mean = s * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * s * s)).exp()
        + mu * (1.0 - 2.0 * normal_cdf(-mu / s));
    Ok(Moments {
        mean,
        variance: mu * mu + s * s - mean * mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

const CHUNK: usize = 1 << 16;

/// Sample estimate of `E|X|`. Chunks draw from their own child streams and are
/// summed in order, so the result does not depend on the thread count.
pub fn folded_normal_monte_carlo(p: FoldedNormalParams, samples: usize, rng: &Rng) -> Result<MonteCarlo> {
    let p = FoldedNormalParams::new(p.mu, p.sigma)?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least two"));
    }
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let n = CHUNK.min(samples - i * CHUNK);
            let mut r = rng.child_indexed("chunk", i as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let y = (p.mu + p.sigma * r.gaussian()).abs();
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 - n * mean * mean) / (n - 1.0);
    Ok(MonteCarlo {
        mean,
        std_error: (var.max(0.0) / n).sqrt(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu: f64, sigma: f64) -> Moments {
        folded_normal_stats(FoldedNormalParams { mu, sigma }).unwrap()
    }

    #[test]
    fn half_normal() {
        assert!((stats(0.0, 1.0).mean - 0.797_884_560_8).abs() < 1e-10);
        assert!((stats(0.0, 2.0).mean - 1.595_769_121_6).abs() < 1e-10);
        assert!((stats(0.0, 1.0).variance - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_in_mu() {
        for mu in [0.3, 1.0, 2.5] {
            assert!((stats(mu, 1.3).mean - stats(-mu, 1.3).mean).abs() < 1e-15);
        }
    }

    #[test]
    fn far_from_zero_is_unfolded() {
        let m = stats(40.0, 1.0);
        assert!((m.mean - 40.0).abs() < 1e-12);
        assert!((m.variance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mu_one_by_quadrature() {
        // Trapezoid rule on |x| phi(x - 1) over [-12, 14].
        let h = 1e-4;
        let f = |x: f64| x.abs() * (-(x - 1.0) * (x - 1.0) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let n = (26.0 / h) as usize;
        let integral: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(-12.0 + i as f64 * h)
            })
            .sum::<f64>()
            * h;
        assert!((stats(1.0, 1.0).mean - integral).abs() < 1e-8);
        assert!((stats(1.0, 1.0).mean - 1.16663).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_sigma() {
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(folded_normal_stats(FoldedNormalParams { mu: 0.0, sigma: s }).is_err());
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = FoldedNormalParams::new(1.0, 2.0).unwrap();
        let a = folded_normal_monte_carlo(p, 200_000, &Rng::new(1)).unwrap();
        let b = folded_normal_monte_carlo(p, 200_000, &Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - stats(1.0, 2.0).mean).abs() < 4.0 * a.std_error);
    }
}
