use serde::{Deserialize, Serialize};

use super::{finite, replicate, stats, ConvergenceReport, ExperimentConfig, Flag, PathSource, RawRecord};
use crate::empirical::prefix_len;
use crate::error::Result;
use crate::hermite::{normalization_dn, HermiteProfile};
use crate::process::{child_seed, hermite_eval, PathGenerator};

/// Monte Carlo second moment of `S_N(n, x, y)` at one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub x: f64,
    pub y: f64,
    pub len: usize,
    pub n: usize,
    /// `F(x, y) = F(y) - F(x)`.
    pub f_xy: f64,
    pub second_moment: f64,
    pub se: f64,
    /// `E S^2 / ((n / N) F(x, y) (1 - F(x, y)))`; absent when `F(x, y) = 0`.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
}

/// Estimates `E S_N(n, x, y)^2` for each pair over `reps` paths from
/// `source`; replication `r` uses seed `child_seed(ladder_seed, r)`.
#[allow(clippy::too_many_arguments)]
pub fn moment_table<S: PathSource + ?Sized>(
    source: &S,
    profile: &HermiteProfile,
    d_n: f64,
    n: usize,
    pairs: &[(f64, f64)],
    reps: usize,
    ladder_seed: u64,
    workers: usize,
) -> Result<Vec<MomentRow>> {
    let len = source.len();
    let m = profile.rank();
    let coeffs: Vec<(f64, f64, f64, f64)> = pairs
        .iter()
        .map(|&(x, y)| {
            let (fx, lx) = profile.cdf_and_leading(x)?;
            let (fy, ly) = profile.cdf_and_leading(y)?;
            Ok((x, y, fy - fx, ly - lx))
        })
        .collect::<Result<_>>()?;
    let squares: Vec<Vec<f64>> = replicate(workers, reps, |r| {
        let path = source.sample(child_seed(ladder_seed, r as u64));
        let mut sums = vec![0.0; coeffs.len()];
        for &xj in &path[..n] {
            let yj = profile.g().apply(xj);
            let h = hermite_eval(m, xj);
            for (s, &(x, y, f_xy, l_xy)) in sums.iter_mut().zip(&coeffs) {
                let ind = if x < yj && yj <= y { 1.0 } else { 0.0 };
                *s += ind - f_xy - l_xy * h;
            }
        }
        Ok(sums.into_iter().map(|s| (s / d_n).powi(2)).collect())
    })?;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(k, &(x, y, f_xy, _))| {
            let col: Vec<f64> = squares.iter().map(|row| row[k]).collect();
            let (second_moment, se) = stats::mean_se(&col);
            let denom = n as f64 / len as f64 * f_xy * (1.0 - f_xy);
            let (ratio, ratio_se) = if denom > 0.0 {
                (Some(second_moment / denom), finite(se / denom))
            } else {
                (None, None)
            };
            MomentRow {
                x,
                y,
                len,
                n,
                f_xy,
                second_moment,
                se: if se.is_finite() { se } else { 0.0 },
                ratio,
                ratio_se,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub x: f64,
    pub y: f64,
    pub rows: Vec<MomentRow>,
    /// Lengths at which the ratio rose by more than two standard errors.
    pub violations: Vec<usize>,
    pub decreasing: Option<bool>,
    pub notice: Option<String>,
}

/// Second-moment bound check along the length ladder.
pub fn run_moment_check(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (profile, summary) = cfg.hypotheses()?;
    let m = profile.rank();
    let mut report = ConvergenceReport::new("moment", cfg, summary);
    let pairs = &cfg.moment.pairs;
    let mut columns: Vec<Vec<MomentRow>> = vec![Vec::new(); pairs.len()];
    for &len in &cfg.n_ladder {
        let gen = PathGenerator::new(&cfg.model, len)?;
        let d_n = normalization_dn(&cfg.model, m, len)?;
        let n = prefix_len(len, cfg.moment.n_fraction);
        let ladder_seed = child_seed(cfg.master_seed, len as u64);
        let rows = moment_table(
            &gen,
            &profile,
            d_n,
            n,
            pairs,
            cfg.replications,
            ladder_seed,
            cfg.workers,
        )?;
        for (col, row) in columns.iter_mut().zip(rows) {
            col.push(row);
        }
    }
    for col in columns {
        let (x, y) = (col[0].x, col[0].y);
        let mut series = MomentSeries {
            x,
            y,
            rows: col,
            violations: Vec::new(),
            decreasing: None,
            notice: None,
        };
        if series.rows.iter().any(|r| r.ratio.is_none()) {
            let msg = format!("pair ({x}, {y}) skipped: F(x, y) = 0");
            report.notices.push(msg.clone());
            series.notice = Some(msg);
        } else {
            let ratios: Vec<f64> = series.rows.iter().map(|r| r.ratio.unwrap()).collect();
            let se: Vec<f64> = series.rows.iter().map(|r| r.ratio_se.unwrap_or(0.0)).collect();
            series.violations = stats::nonincreasing_violations(&ratios, &se)
                .into_iter()
                .map(|i| series.rows[i].len)
                .collect();
            let ok = series.violations.is_empty();
            series.decreasing = Some(ok);
            report.flags.push(Flag::new(
                format!("moment_ratio_decreasing[x={x},y={y}]"),
                ok,
                format!("ratios {ratios:?}"),
            ));
        }
        for row in &series.rows {
            report.raw.push(RawRecord {
                experiment: "moment".into(),
                n: row.len,
                replication: 0,
                seed: child_seed(cfg.master_seed, row.len as u64),
                label: format!("E S^2 (x={x},y={y})"),
                value: row.second_moment,
            });
        }
        report.moments.push(series);
    }
    Ok(report.finish())
}
