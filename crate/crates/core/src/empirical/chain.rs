//! Refining partitions of the half-lines driven by `w * Lambda`.
//!
//! Both sides are handled through the distance `s = |x| >= 0` from the
//! origin. On the positive side the level function is
//! `g(s) = w(s) Lambda(s) - Lambda(0)`; on the negative side it is
//! `g(s) = w(-s) (Lambda(0) - Lambda(-s))`. Both are nondecreasing in `s` and
//! vanish at `s = 0`, and node `i` of level `k` is `inf { s : g(s) >= i 2^-k }`.

use serde::{Deserialize, Serialize};

use super::left_limit_offset;
use crate::error::{Error, Result};
use crate::hermite::{HermiteProfile, WeightFunction};
use crate::numeric::bisect_switch;

const ROOT_TOL: f64 = 1e-10;
const SLACK_TOL: f64 = 1e-9;
const TAIL_STOP: f64 = 1e-12;
const STABLE_INCREMENT: f64 = 1e-8;
const MAX_RADIUS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSide {
    Positive,
    Negative,
}

impl ChainSide {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
        }
    }

    fn point(&self, s: f64) -> f64 {
        match self {
            Self::Positive => s,
            Self::Negative => -s,
        }
    }
}

/// Why a level stopped producing nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// The node budget `i_max` was reached.
    Budget,
    /// The remaining weighted tail mass `w^2 (1 - F)` (or `w^2 F`) fell below `1e-12`.
    Tail,
    /// `w * Lambda` is bounded and no further level value is attained.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLevel {
    pub k: u32,
    /// Signed node positions, starting with `0`.
    pub nodes: Vec<f64>,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGrid {
    pub side: ChainSide,
    pub lambda: f64,
    /// `Lambda(0)`.
    pub anchor: f64,
    pub levels: Vec<ChainLevel>,
}

impl ChainGrid {
    pub fn depth(&self) -> u32 {
        self.levels.last().map_or(0, |l| l.k)
    }
}

struct LevelFn<'a> {
    profile: &'a HermiteProfile,
    w: WeightFunction,
    side: ChainSide,
    anchor: f64,
}

impl LevelFn<'_> {
    fn eval(&self, s: f64) -> Result<f64> {
        let x = self.side.point(s);
        let lam = self.profile.majorant(x)?;
        Ok(match self.side {
            ChainSide::Positive => self.w.eval(x) * lam - self.anchor,
            ChainSide::Negative => self.w.eval(x) * (self.anchor - lam),
        })
    }

    /// Weighted tail mass beyond `x` used for the stopping rule.
    fn tail(&self, s: f64) -> Result<f64> {
        let x = self.side.point(s);
        let f = self.profile.cdf(x)?;
        let mass = match self.side {
            ChainSide::Positive => 1.0 - f,
            ChainSide::Negative => f,
        };
        Ok(self.w.eval(x).powi(2) * mass)
    }

    /// `inf { s >= from : g(s) >= target }`, or `None` if not attained below `MAX_RADIUS`.
    fn solve(&self, from: f64, step: f64, target: f64) -> Result<Option<f64>> {
        if self.eval(from)? >= target {
            return Ok(Some(from));
        }
        let mut lo = from;
        let mut width = step.max(1e-6);
        let hi = loop {
            let cand = from + width;
            if self.eval(cand)? >= target {
                break cand;
            }
            lo = cand;
            width *= 2.0;
            if cand > MAX_RADIUS {
                return Ok(None);
            }
        };
        let mut failure = None;
        let (_, hi) = bisect_switch(lo, hi, ROOT_TOL, |s| match self.eval(s) {
            Ok(v) => v >= target,
            Err(e) => {
                failure.get_or_insert(e);
                true
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(Some(hi)),
        }
    }
}

/// Builds levels `k = 0..=k_max` with at most `i_max` nodes each.
///
/// Fails with [`Error::ZeroAnchorMass`] on the negative side when
/// `Lambda(0) = 0`, since every level value would then sit at the origin.
pub fn build_chain_grid(
    profile: &HermiteProfile,
    w: &WeightFunction,
    side: ChainSide,
    k_max: u32,
    i_max: usize,
) -> Result<ChainGrid> {
    if i_max < 2 {
        return Err(Error::InvalidInput(
            "chain grid node budget must be at least 2".into(),
        ));
    }
    let anchor = profile.majorant(0.0)?;
    if side == ChainSide::Negative && anchor <= 0.0 {
        return Err(Error::ZeroAnchorMass {
            side: side.label(),
            value: anchor,
        });
    }
    let level_fn = LevelFn {
        profile,
        w: *w,
        side,
        anchor,
    };
    let mut levels = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let inc = 0.5f64.powi(k as i32);
        let mut s_nodes = vec![0.0];
        let mut step = 1e-3;
        let truncation = loop {
            if s_nodes.len() >= i_max {
                break Truncation::Budget;
            }
            let last = *s_nodes.last().unwrap();
            if s_nodes.len() > 1 && level_fn.tail(last)? < TAIL_STOP {
                break Truncation::Tail;
            }
            let target = s_nodes.len() as f64 * inc;
            match level_fn.solve(last, step, target)? {
                Some(s) => {
                    if s > last {
                        step = s - last;
                    }
                    s_nodes.push(s);
                }
                None => break Truncation::Exhausted,
            }
        };
        levels.push(ChainLevel {
            k,
            nodes: s_nodes.into_iter().map(|s| side.point(s)).collect(),
            truncation,
        });
    }
    Ok(ChainGrid {
        side,
        lambda: w.lambda,
        anchor,
        levels,
    })
}

/// Weighted summability sums of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSums {
    /// `A(k) = sum_{i>=1} w(x_i)^2 |F(x_i) - F(x_{i-1})|`.
    pub a: f64,
    /// `B(k) = sum_{i>=1} w(x_{i+1})^2 |F(x_{i+1}) - F(x_{i-1})|`.
    pub b: f64,
    /// `w(x_last)^2` times the marginal mass beyond the last node.
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub k: u32,
    pub nodes: usize,
    pub truncation: Truncation,
    /// `max_i w(x_{i+1}) |Lambda(x_{i+1}-) - Lambda(x_i)|` (left limit on the
    /// far side of each cell).
    pub max_spacing: f64,
    pub bound: f64,
    /// Relative slack `(bound - max_spacing) / bound`.
    pub slack: f64,
    /// Every node of level `k - 1` inside this level's range reappears here.
    pub refines_previous: bool,
    /// `max_i w(x_{i+1}) / w(x_i)`.
    pub neighbour_ratio: f64,
    pub sums: LevelSums,
    /// `B(k) / B(0)`.
    pub b_ratio: f64,
    /// `(1 + rho_k^2) A(0)`, which dominates `B(k)` when `A` is nonincreasing.
    pub b_bound: f64,
    pub passed: bool,
}

/// Partial sums of `sum_j w(x_{j+1}(0))^2 (1 - F(x_j(0)))` (or `F(y_j(0))`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCheck {
    pub terms: usize,
    pub total: f64,
    pub last_increment: f64,
    pub stabilized: bool,
    pub partial_sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGridReport {
    pub side: ChainSide,
    pub lambda: f64,
    pub anchor: f64,
    pub levels: Vec<LevelCheck>,
    pub series: SeriesCheck,
    /// `A(k)` nonincreasing in `k`.
    pub a_monotone: bool,
    pub max_b_ratio: f64,
    pub passed: bool,
}

fn marginal_mass_beyond(profile: &HermiteProfile, side: ChainSide, x: f64) -> Result<f64> {
    let f = profile.cdf(x)?;
    Ok(match side {
        ChainSide::Positive => 1.0 - f,
        ChainSide::Negative => f,
    })
}

/// Evaluates the spacing inequality and the summability sums on every level.
pub fn verify_chain_grid(
    grid: &ChainGrid,
    profile: &HermiteProfile,
    w: &WeightFunction,
) -> Result<ChainGridReport> {
    let side = grid.side;
    let mut levels = Vec::with_capacity(grid.levels.len());
    let mut a0 = None;
    let mut b0 = None;
    let mut a_monotone = true;
    let mut prev_a = f64::INFINITY;
    let mut max_b_ratio: f64 = 0.0;
    for (li, level) in grid.levels.iter().enumerate() {
        let nodes = &level.nodes;
        let lam: Vec<f64> = nodes
            .iter()
            .map(|&x| profile.majorant(x))
            .collect::<Result<_>>()?;
        let cdf: Vec<f64> = nodes.iter().map(|&x| profile.cdf(x)).collect::<Result<_>>()?;
        let wt: Vec<f64> = nodes.iter().map(|&x| w.eval(x)).collect();
        let bound = 0.5f64.powi(level.k as i32);

        let mut max_spacing: f64 = 0.0;
        let mut ratio: f64 = 1.0;
        for i in 0..nodes.len().saturating_sub(1) {
            let spacing = match side {
                ChainSide::Positive => {
                    let far = nodes[i + 1];
                    let lam_left = profile.majorant(far - left_limit_offset(far))?;
                    wt[i + 1] * (lam_left - lam[i])
                }
                ChainSide::Negative => {
                    let near = nodes[i];
                    let lam_left = profile.majorant(near - left_limit_offset(near))?;
                    wt[i + 1] * (lam_left - lam[i + 1])
                }
            };
            max_spacing = max_spacing.max(spacing);
            ratio = ratio.max(wt[i + 1] / wt[i]);
        }
        let slack = (bound - max_spacing) / bound;

        let mut a = 0.0;
        let mut b = 0.0;
        for i in 1..nodes.len() {
            a += wt[i].powi(2) * (cdf[i] - cdf[i - 1]).abs();
            if i + 1 < nodes.len() {
                b += wt[i + 1].powi(2) * (cdf[i + 1] - cdf[i - 1]).abs();
            }
        }
        let last = *nodes.last().unwrap();
        let tail = w.eval(last).powi(2) * marginal_mass_beyond(profile, side, last)?;

        let refines_previous = if li == 0 {
            true
        } else {
            let coarse = &grid.levels[li - 1].nodes;
            let reach = last.abs();
            coarse
                .iter()
                .enumerate()
                .filter(|(_, x)| x.abs() <= reach)
                .all(|(i, &x)| {
                    nodes
                        .get(2 * i)
                        .is_some_and(|&y| (y - x).abs() <= SLACK_TOL * (1.0 + x.abs()))
                })
        };

        let a_base = *a0.get_or_insert(a);
        let b_base = *b0.get_or_insert(b);
        if a > prev_a + SLACK_TOL {
            a_monotone = false;
        }
        prev_a = a;
        let b_ratio = if b_base > 0.0 { b / b_base } else { f64::NAN };
        if b_ratio.is_finite() {
            max_b_ratio = max_b_ratio.max(b_ratio);
        }
        let b_bound = (1.0 + ratio * ratio) * a_base;
        let passed = slack >= -SLACK_TOL && refines_previous && b <= b_bound * (1.0 + SLACK_TOL) + SLACK_TOL;
        levels.push(LevelCheck {
            k: level.k,
            nodes: nodes.len(),
            truncation: level.truncation,
            max_spacing,
            bound,
            slack,
            refines_previous,
            neighbour_ratio: ratio,
            sums: LevelSums { a, b, tail },
            b_ratio,
            b_bound,
            passed,
        });
    }

    let series = match grid.levels.first() {
        Some(level0) => {
            let nodes = &level0.nodes;
            let mut partial_sums = Vec::with_capacity(nodes.len());
            let mut total = 0.0;
            let mut last_increment = 0.0;
            for j in 0..nodes.len().saturating_sub(1) {
                last_increment =
                    w.eval(nodes[j + 1]).powi(2) * marginal_mass_beyond(profile, side, nodes[j])?;
                total += last_increment;
                partial_sums.push(total);
            }
            SeriesCheck {
                terms: partial_sums.len(),
                total,
                last_increment,
                stabilized: last_increment < STABLE_INCREMENT,
                partial_sums,
            }
        }
        None => SeriesCheck {
            terms: 0,
            total: 0.0,
            last_increment: 0.0,
            stabilized: true,
            partial_sums: Vec::new(),
        },
    };
    let passed = a_monotone && series.stabilized && levels.iter().all(|l| l.passed);
    Ok(ChainGridReport {
        side,
        lambda: grid.lambda,
        anchor: grid.anchor,
        levels,
        series,
        a_monotone,
        max_b_ratio,
        passed,
    })
}

/// `K = floor(log2(8 N / (d_N eps))) + 1`, clamped at `0`.
pub fn chaining_depth_k(len: usize, d_n: f64, epsilon: f64) -> Result<u32> {
    if !(epsilon > 0.0) {
        return Err(Error::ParameterDomain {
            name: "epsilon",
            value: epsilon,
            expected: "(0, inf)",
        });
    }
    if len == 0 || !(d_n > 0.0) {
        return Err(Error::InvalidInput(
            "chaining depth needs N >= 1 and d_N > 0".into(),
        ));
    }
    let ratio = 8.0 * len as f64 / (d_n * epsilon);
    let k = (ratio.log2().floor() + 1.0).max(0.0) as u32;
    let scale = 2.0 * len as f64 / d_n;
    assert!(
        epsilon / 2.0 - scale * 0.5f64.powi(k as i32) >= epsilon / 4.0 * (1.0 - 1e-12),
        "chaining depth {k} leaves less than eps/4"
    );
    Ok(k)
}
