//! Replicated experiments turning the limit statements into finite-sample
//! checks, with reports that are reproducible byte for byte.

mod baseline;
mod limit;
mod moment;
mod reduction;
mod stats;

pub use baseline::{kiefer_mueller_check, CovarianceCheck};
pub use limit::{run_limit_experiment, ProbeLevel, ProbeSeries};
pub use moment::{moment_table, run_moment_check, MomentRow, MomentSeries};
pub use reduction::{run_reduction_experiment, EpsilonSeries, StatisticSummary, TailEstimate};
pub use stats::{
    ks_distance, ks_distance_two_sample, ks_trend, mean_se, nonincreasing_violations, slope_fit, SlopeFit,
    TrendCheck,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{DEFAULT_MESH_STEP, DEFAULT_TAIL_TOL};
use crate::error::{Error, Result};
use crate::hermite::{HermiteProfile, Subordination};
use crate::process::{child_seed, CovarianceModel, PathGenerator};

/// Below this many replications distributional pass/fail flags are not issued.
pub const MIN_DISTRIBUTIONAL_REPS: usize = 100;

/// Anything that yields Gaussian paths of a fixed length from a seed.
pub trait PathSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, seed: u64) -> Vec<f64>;
}

impl PathSource for PathGenerator {
    fn len(&self) -> usize {
        PathGenerator::len(self)
    }

    fn sample(&self, seed: u64) -> Vec<f64> {
        PathGenerator::sample(self, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentConfig {
    /// `n = floor(N * n_fraction)` summands.
    pub n_fraction: f64,
    /// Pairs `x <= y` for `S_N(n, x, y) = S_N(n, y) - S_N(n, x)`.
    pub pairs: Vec<(f64, f64)>,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            n_fraction: 1.0,
            pairs: vec![(-1.0, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: CovarianceModel,
    pub g: Subordination,
    pub delta: f64,
    /// Experimental replacement for `lambda = delta / 3`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub n_ladder: Vec<usize>,
    pub replications: usize,
    pub epsilon_grid: Vec<f64>,
    pub x_probe: Vec<f64>,
    pub t_probe: Vec<f64>,
    pub master_seed: u64,
    /// Worker threads; has no influence on results and is left out of reports.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub mesh_step: f64,
    pub tail_tol: f64,
    pub ks_bias_margin: f64,
    pub moment: MomentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: CovarianceModel::Fgn { hurst: 0.75 },
            g: Subordination::Identity,
            delta: 3.0,
            lambda: None,
            n_ladder: (8..=13).map(|p| 1usize << p).collect(),
            replications: 500,
            epsilon_grid: vec![0.25, 0.5, 1.0],
            x_probe: vec![-1.0, 0.0, 1.0],
            t_probe: vec![0.5, 1.0],
            master_seed: 20_240_601,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            mesh_step: DEFAULT_MESH_STEP,
            tail_tol: DEFAULT_TAIL_TOL,
            ks_bias_margin: 0.04,
            moment: MomentConfig::default(),
        }
    }
}

/// The hypothesis set `{m, D, delta, lambda}` of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub rank: usize,
    pub memory_exponent: f64,
    pub m_times_d: f64,
    pub delta: f64,
    pub lambda: f64,
    pub lambda_experimental: bool,
}

impl ExperimentConfig {
    /// Checks every field and reports all problems together, by field path.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if let Err(e) = self.model.validate() {
            issues.push(format!("model: {e}"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            issues.push(format!("delta: must be positive, got {}", self.delta));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                issues.push(format!("lambda: must be nonnegative, got {l}"));
            }
        }
        if self.n_ladder.is_empty() {
            issues.push("n_ladder: must not be empty".into());
        }
        if self.n_ladder.iter().any(|&n| n < 2) {
            issues.push("n_ladder: lengths must be at least 2".into());
        }
        if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            issues.push("n_ladder: must be strictly increasing".into());
        }
        if self.replications == 0 {
            issues.push("replications: must be positive".into());
        }
        if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            issues.push("epsilon_grid: entries must be positive and finite".into());
        }
        if self.x_probe.iter().any(|x| !x.is_finite()) {
            issues.push("x_probe: entries must be finite".into());
        }
        if self.t_probe.iter().any(|t| !(0.0..=1.0).contains(t)) {
            issues.push("t_probe: entries must lie in [0, 1]".into());
        }
        if !(self.mesh_step > 0.0 && self.mesh_step.is_finite()) {
            issues.push("mesh_step: must be positive".into());
        }
        if !(self.tail_tol > 0.0) {
            issues.push("tail_tol: must be positive".into());
        }
        if !(self.ks_bias_margin >= 0.0) {
            issues.push("ks_bias_margin: must be nonnegative".into());
        }
        if !(self.moment.n_fraction > 0.0 && self.moment.n_fraction <= 1.0) {
            issues.push("moment.n_fraction: must lie in (0, 1]".into());
        }
        if self.moment.pairs.iter().any(|(x, y)| !(x <= y)) {
            issues.push("moment.pairs: each pair needs x <= y".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(issues.join("; ")))
        }
    }

    pub fn profile(&self) -> Result<HermiteProfile> {
        let p = HermiteProfile::detect(self.g.clone(), self.delta)?;
        match self.lambda {
            Some(l) => p.with_lambda_override(l),
            None => Ok(p),
        }
    }

    /// Validates the configuration and the hypothesis `0 < D < 1/m`.
    pub fn hypotheses(&self) -> Result<(HermiteProfile, ProfileSummary)> {
        self.validate()?;
        let profile = self.profile()?;
        let m = profile.rank();
        let d = self.model.memory_exponent().ok_or_else(|| {
            Error::Hypothesis(
                "the covariance model has no long memory (D undefined), so D < 1/m fails".into(),
            )
        })?;
        let md = m as f64 * d;
        if !(d > 0.0 && md < 1.0) {
            return Err(Error::Hypothesis(format!(
                "D ≥ 1/m (m = {m}, D = {d}, mD = {md})"
            )));
        }
        let summary = ProfileSummary {
            rank: m,
            memory_exponent: d,
            m_times_d: md,
            delta: profile.delta(),
            lambda: profile.lambda(),
            lambda_experimental: profile.lambda_overridden(),
        };
        Ok((profile, summary))
    }

    /// Seed of replication `rep` at length `len`.
    pub fn replication_seed(&self, len: usize, rep: usize) -> u64 {
        replication_seed(self.master_seed, len, rep)
    }

    pub fn distributional_flags(&self) -> bool {
        self.replications >= MIN_DISTRIBUTIONAL_REPS
    }
}

pub fn replication_seed(master: u64, len: usize, rep: usize) -> u64 {
    child_seed(child_seed(master, len as u64), rep as u64)
}

/// Runs `f(rep)` for `rep in 0..reps` on `workers` threads, returning results
/// in replication order.
pub fn replicate<T, F>(workers: usize, reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    pool.install(|| (0..reps).into_par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Flag {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderSeed {
    pub n: usize,
    /// `child_seed(master_seed, N)`; replication `r` uses `child_seed(this, r)`.
    pub seed: u64,
}

/// One replication's record for `--keep-raw` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub experiment: String,
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub label: String,
    pub value: f64,
}

/// Self-contained outcome of one or more experiments. Every estimate carries
/// its standard error and every flag is derived from recorded numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub experiments: Vec<String>,
    pub config: ExperimentConfig,
    pub profile: ProfileSummary,
    pub seeds: Vec<LadderSeed>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<StatisticSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail_probabilities: Vec<EpsilonSeries>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moments: Vec<MomentSeries>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub limit: Vec<ProbeSeries>,
    pub notices: Vec<String>,
    pub flags: Vec<Flag>,
    pub passed: bool,
    #[serde(skip)]
    pub raw: Vec<RawRecord>,
}

impl ConvergenceReport {
    pub(crate) fn new(experiment: &str, cfg: &ExperimentConfig, profile: ProfileSummary) -> Self {
        Self {
            experiments: vec![experiment.to_string()],
            config: cfg.clone(),
            profile,
            seeds: cfg
                .n_ladder
                .iter()
                .map(|&n| LadderSeed {
                    n,
                    seed: child_seed(cfg.master_seed, n as u64),
                })
                .collect(),
            statistics: Vec::new(),
            tail_probabilities: Vec::new(),
            moments: Vec::new(),
            limit: Vec::new(),
            notices: Vec::new(),
            flags: Vec::new(),
            passed: true,
            raw: Vec::new(),
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        self.passed = self.flags.iter().all(|f| f.passed);
        self
    }

    /// Combines two reports on the same configuration.
    pub fn merge(mut self, other: ConvergenceReport) -> Self {
        self.experiments.extend(other.experiments);
        self.statistics.extend(other.statistics);
        self.tail_probabilities.extend(other.tail_probabilities);
        self.moments.extend(other.moments);
        self.limit.extend(other.limit);
        self.notices.extend(other.notices);
        self.flags.extend(other.flags);
        self.raw.extend(other.raw);
        self.finish()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `None` for non-finite values, so reports stay valid JSON.
pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_satisfies_hypotheses() {
        let cfg = ExperimentConfig::default();
        let (_, s) = cfg.hypotheses().unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.m_times_d - 0.5).abs() < 1e-15);
        assert!((s.lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hypothesis_violations() {
        let cfg = ExperimentConfig {
            model: CovarianceModel::Fgn { hurst: 0.55 },
            g: Subordination::Square,
            ..Default::default()
        };
        match cfg.hypotheses() {
            Err(Error::Hypothesis(msg)) => assert!(msg.contains("D ≥ 1/m") && msg.contains("m = 2")),
            other => panic!("expected hypothesis error, got {other:?}"),
        }
        let white = ExperimentConfig {
            model: CovarianceModel::White,
            ..Default::default()
        };
        assert!(matches!(white.hypotheses(), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn validation_collects_every_issue() {
        let cfg = ExperimentConfig {
            n_ladder: vec![512, 256],
            replications: 0,
            t_probe: vec![1.5],
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        for field in ["n_ladder", "replications", "t_probe"] {
            assert!(msg.contains(field), "{msg}");
        }
    }

    #[test]
    fn replicate_preserves_order_for_any_worker_count() {
        let one = replicate(1, 50, |r| Ok(replication_seed(7, 64, r))).unwrap();
        let four = replicate(4, 50, |r| Ok(replication_seed(7, 64, r))).unwrap();
        assert_eq!(one, four);
    }
}
