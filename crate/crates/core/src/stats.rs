use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test of `a > b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what: "paired samples",
            expected: vec![a.len()],
            got: vec![b.len()],
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("samples", "need at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean_diff = mean(&d);
    let se = std_dev(&d) / (n as f64).sqrt();
    let (t, p_value) = if se == 0.0 {
        // All differences equal: the sign of the mean decides.
        let t = if mean_diff > 0.0 {
            f64::INFINITY
        } else if mean_diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        (t, if mean_diff > 0.0 { 0.0 } else if mean_diff < 0.0 { 1.0 } else { 0.5 })
    } else {
        let t = mean_diff / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::invalid("degrees of freedom", e.to_string()))?;
        (t, dist.sf(t))
    };
    Ok(PairedTest {
        n,
        mean_diff,
        t,
        p_value,
    })
}
