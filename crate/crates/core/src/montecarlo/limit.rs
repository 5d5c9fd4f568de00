use serde::{Deserialize, Serialize};

use super::{
    ks_distance, ks_distance_two_sample, ks_trend, replicate, ConvergenceReport, ExperimentConfig, Flag,
    RawRecord, TrendCheck,
};
use crate::empirical::prefix_len;
use crate::error::Result;
use crate::hermite::{normalization_dn, RANK_TOLERANCE};
use crate::numeric::{factorial, normal_cdf};
use crate::process::{child_seed, hermite_eval, PathGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeLevel {
    pub n: usize,
    pub ks: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub x: f64,
    pub t: f64,
    /// `J_m(x) / m!`.
    pub leading: f64,
    /// `"normal"` (one-sample) or `"surrogate"` (two-sample).
    pub reference: String,
    /// Standard deviation of the normal reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_sd: Option<f64>,
    pub levels: Vec<ProbeLevel>,
    pub trend: Option<TrendCheck>,
    pub final_below_threshold: bool,
}

struct Probe {
    x: f64,
    t: f64,
    f: f64,
    leading: f64,
}

/// Compares `d_N^{-1} R_N(x, t)` with its limit `(J_m(x)/m!) Z_m(t)` by KS
/// distances along the length ladder.
pub fn run_limit_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (profile, summary) = cfg.hypotheses()?;
    let m = profile.rank();
    let d = summary.memory_exponent;
    let reps = cfg.replications;
    let mut report = ConvergenceReport::new("limit", cfg, summary);

    let mut probes = Vec::new();
    for &x in &cfg.x_probe {
        let j_m = profile.coefficient(m, x)?;
        for &t in &cfg.t_probe {
            if j_m.abs() < RANK_TOLERANCE {
                report.notices.push(format!(
                    "probe (x = {x}, t = {t}) skipped: |J_{m}(x)| = {:e} is below the rank tolerance, degenerate limit",
                    j_m.abs()
                ));
            } else if t == 0.0 {
                report.notices.push(format!(
                    "probe (x = {x}, t = 0) skipped: R_N(x, 0) = 0, degenerate limit"
                ));
            } else {
                probes.push(Probe {
                    x,
                    t,
                    f: profile.cdf(x)?,
                    leading: j_m / factorial(m),
                });
            }
        }
    }

    // For m >= 2 the limit has no closed form: a long partial-sum path stands in.
    let surrogate: Option<Vec<Vec<f64>>> = if m >= 2 && !probes.is_empty() {
        let big = 4 * cfg.n_ladder.iter().max().copied().unwrap_or(1);
        let gen = PathGenerator::new(&cfg.model, big)?;
        let d_big = normalization_dn(&cfg.model, m, big)?;
        let seed = child_seed(cfg.master_seed, big as u64);
        report.notices.push(format!(
            "m = {m}: reference law is the surrogate d_M^-1 sum_(j <= Mt) H_{m}(X_j) with M = {big} (ladder seed {seed})"
        ));
        let by_rep = replicate(cfg.workers, reps, |r| {
            let x = gen.sample(child_seed(seed, r as u64));
            Ok(probes
                .iter()
                .map(|p| {
                    let k = prefix_len(big, p.t);
                    p.leading * x[..k].iter().map(|&s| hermite_eval(m, s)).sum::<f64>() / d_big
                })
                .collect::<Vec<f64>>())
        })?;
        Some(
            (0..probes.len())
                .map(|i| by_rep.iter().map(|row| row[i]).collect())
                .collect(),
        )
    } else {
        None
    };

    let one_sample = 1.36 / (reps as f64).sqrt() + cfg.ks_bias_margin;
    let two_sample = 1.36 * (2.0 / reps as f64).sqrt() + cfg.ks_bias_margin;
    let mut levels: Vec<Vec<ProbeLevel>> = vec![Vec::new(); probes.len()];
    for &n in &cfg.n_ladder {
        let gen = PathGenerator::new(&cfg.model, n)?;
        let d_n = normalization_dn(&cfg.model, m, n)?;
        let by_rep = replicate(cfg.workers, reps, |r| {
            let x = gen.sample(cfg.replication_seed(n, r));
            Ok(probes
                .iter()
                .map(|p| {
                    let k = prefix_len(n, p.t);
                    let count = x[..k].iter().filter(|&&s| profile.g().apply(s) <= p.x).count();
                    (count as f64 - k as f64 * p.f) / d_n
                })
                .collect::<Vec<f64>>())
        })?;
        for (i, p) in probes.iter().enumerate() {
            let values: Vec<f64> = by_rep.iter().map(|row| row[i]).collect();
            let (ks, threshold) = match &surrogate {
                None => {
                    let sd = p.leading.abs() * p.t.powf(1.0 - d / 2.0);
                    (ks_distance(&values, |v| normal_cdf(v / sd))?, one_sample)
                }
                Some(reference) => (ks_distance_two_sample(&values, &reference[i])?, two_sample),
            };
            levels[i].push(ProbeLevel { n, ks, threshold });
            for (r, v) in values.iter().enumerate() {
                report.raw.push(RawRecord {
                    experiment: "limit".into(),
                    n,
                    replication: r,
                    seed: cfg.replication_seed(n, r),
                    label: format!("R_N/d_N(x={},t={})", p.x, p.t),
                    value: *v,
                });
            }
        }
    }

    let flags_on = cfg.distributional_flags();
    if !flags_on {
        report.notices.push(format!(
            "R < {}: distributional flags suppressed",
            super::MIN_DISTRIBUTIONAL_REPS
        ));
    }
    let r_eff = if surrogate.is_some() {
        reps as f64 / 2.0
    } else {
        reps as f64
    };
    for (p, lv) in probes.iter().zip(levels) {
        let ks: Vec<f64> = lv.iter().map(|l| l.ks).collect();
        let trend = ks_trend(&cfg.n_ladder, &ks, r_eff);
        let last = lv.last().expect("nonempty ladder");
        let final_below_threshold = last.ks < last.threshold;
        if flags_on {
            if let Some(tr) = trend {
                report.flags.push(Flag::new(
                    format!("limit_ks_trend[x={},t={}]", p.x, p.t),
                    tr.passed,
                    format!("slope of KS on ln N = {:.4} (se {:.4})", tr.slope, tr.slope_se),
                ));
            }
            report.flags.push(Flag::new(
                format!("limit_ks_final[x={},t={}]", p.x, p.t),
                final_below_threshold,
                format!(
                    "KS {:.4} vs threshold {:.4} at N = {}",
                    last.ks, last.threshold, last.n
                ),
            ));
        }
        report.limit.push(ProbeSeries {
            x: p.x,
            t: p.t,
            leading: p.leading,
            reference: if surrogate.is_some() {
                "surrogate"
            } else {
                "normal"
            }
            .into(),
            reference_sd: surrogate
                .is_none()
                .then(|| p.leading.abs() * p.t.powf(1.0 - d / 2.0)),
            levels: lv,
            trend,
            final_below_threshold,
        });
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::Subordination;

    #[test]
    fn degenerate_probes_are_skipped() {
        let cfg = ExperimentConfig {
            g: Subordination::Square,
            model: crate::process::CovarianceModel::Fgn { hurst: 0.9 },
            n_ladder: vec![32, 64],
            replications: 10,
            x_probe: vec![-0.5, 1.0],
            t_probe: vec![0.0, 1.0],
            ..Default::default()
        };
        let report = run_limit_experiment(&cfg).unwrap();
        // Square has F(x) = 0 and J_2(x) = 0 for x < 0.
        assert!(report
            .notices
            .iter()
            .any(|n| n.contains("x = -0.5") && n.contains("degenerate")));
        assert!(report.notices.iter().any(|n| n.contains("t = 0) skipped")));
        assert!(report
            .notices
            .iter()
            .any(|n| n.contains("distributional flags suppressed")));
        assert_eq!(report.limit.len(), 1);
        assert_eq!(report.limit[0].reference, "surrogate");
        assert!(report.flags.is_empty());
    }
}
