use serde::{Deserialize, Serialize};

use super::{replicate, replication_seed};
use crate::empirical::prefix_len;
use crate::error::Result;
use crate::numeric::normal_cdf;
use crate::process::{CovarianceModel, PathGenerator};

/// Monte Carlo covariance of `N^{-1/2} R_N` at two probes against the
/// Kiefer-Mueller covariance `(s ^ t)(F(x ^ y) - F(x) F(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub x: f64,
    pub s: f64,
    pub y: f64,
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
    pub expected: f64,
    /// `(estimate - expected) / se`.
    pub z: f64,
    pub passed: bool,
}

/// Independent standard normal data with `G` the identity, so `F = Phi`.
/// Every unordered pair of `(x, t)` probes is checked within 4 standard errors.
pub fn kiefer_mueller_check(
    len: usize,
    reps: usize,
    master_seed: u64,
    workers: usize,
    xs: &[f64],
    ts: &[f64],
) -> Result<Vec<CovarianceCheck>> {
    let gen = PathGenerator::new(&CovarianceModel::White, len)?;
    let probes: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ts.iter().map(move |&t| (x, t))).collect();
    let scale = (len as f64).sqrt();
    let samples: Vec<Vec<f64>> = replicate(workers, reps, |r| {
        let path = gen.sample(replication_seed(master_seed, len, r));
        Ok(probes
            .iter()
            .map(|&(x, t)| {
                let k = prefix_len(len, t);
                let count = path[..k].iter().filter(|&&v| v <= x).count();
                (count as f64 - k as f64 * normal_cdf(x)) / scale
            })
            .collect())
    })?;
    let r = reps as f64;
    let means: Vec<f64> = (0..probes.len())
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / r)
        .collect();
    let mut out = Vec::new();
    for a in 0..probes.len() {
        for b in a..probes.len() {
            let prods: Vec<f64> = samples
                .iter()
                .map(|s| (s[a] - means[a]) * (s[b] - means[b]))
                .collect();
            let mean_prod = prods.iter().sum::<f64>() / r;
            let estimate = mean_prod * r / (r - 1.0);
            let var = prods.iter().map(|p| (p - mean_prod).powi(2)).sum::<f64>() / (r - 1.0);
            let se = (var / r).sqrt();
            let ((x, s), (y, t)) = (probes[a], probes[b]);
            let expected = s.min(t) * (normal_cdf(x.min(y)) - normal_cdf(x) * normal_cdf(y));
            let z = (estimate - expected) / se;
            out.push(CovarianceCheck {
                x,
                s,
                y,
                t,
                estimate,
                se,
                expected,
                z,
                passed: z.abs() <= 4.0,
            });
        }
    }
    Ok(out)
}
