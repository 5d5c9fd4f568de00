//! The sequential empirical process `R_N(x, t)`, the reduction remainder
//! `S_N(n, x)` and weighted sup-norms over finite `(x, t)` grids.

mod chain;

pub use chain::{
    build_chain_grid, chaining_depth_k, verify_chain_grid, ChainGrid, ChainGridReport, ChainLevel, ChainSide,
    LevelCheck, LevelSums, SeriesCheck, Truncation,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{HermiteProfile, WeightFunction};
use crate::process::hermite_eval;

/// Default tail tolerance for grid truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;
/// Default spacing of the uniform x mesh.
pub const DEFAULT_MESH_STEP: f64 = 0.01;

/// `floor(len * t)`, treating products within `1e-9` of an integer as that integer.
pub fn prefix_len(len: usize, t: f64) -> usize {
    let raw = len as f64 * t;
    let near = raw.round();
    let k = if (raw - near).abs() < 1e-9 {
        near
    } else {
        raw.floor()
    };
    (k.max(0.0) as usize).min(len)
}

/// Finite evaluation grid standing in for `[-inf, inf] x [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    /// `f64::INFINITY` disables the tail check.
    pub tail_tol: f64,
    pub weight: WeightFunction,
}

impl GridSpec {
    pub fn new(x_nodes: Vec<f64>, t_nodes: Vec<f64>, tail_tol: f64, weight: WeightFunction) -> Result<Self> {
        if x_nodes.is_empty() {
            return Err(Error::InvalidInput("grid has no x nodes".into()));
        }
        if x_nodes.iter().any(|x| !x.is_finite()) || x_nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "x nodes must be finite and strictly increasing".into(),
            ));
        }
        if t_nodes.iter().any(|t| !(0.0..=1.0).contains(t)) || t_nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "t nodes must be strictly increasing within [0, 1]".into(),
            ));
        }
        if t_nodes.last() != Some(&1.0) {
            return Err(Error::InvalidInput("t nodes must contain 1".into()));
        }
        if !(tail_tol > 0.0) {
            return Err(Error::ParameterDomain {
                name: "tail_tol",
                value: tail_tol,
                expected: "(0, inf]",
            });
        }
        Ok(Self {
            x_nodes,
            t_nodes,
            tail_tol,
            weight,
        })
    }

    /// Uniform mesh of spacing `step` (on multiples of `step`) wide enough that
    /// `w(x) N F(x) / d_N` at the left end and `w(x) N (1 - F(x)) / d_N` at the
    /// right end are below `tail_tol`.
    pub fn covering(
        profile: &HermiteProfile,
        len: usize,
        d_n: f64,
        step: f64,
        t_nodes: Vec<f64>,
        tail_tol: f64,
    ) -> Result<Self> {
        let w = profile.weight();
        let scale = len as f64 / d_n;
        let hi = tail_extent(
            step,
            |x| Ok(w.eval(x) * scale * (1.0 - profile.cdf(x)?)),
            tail_tol,
            1.0,
        )?;
        let lo = tail_extent(step, |x| Ok(w.eval(x) * scale * profile.cdf(x)?), tail_tol, -1.0)?;
        let count = hi - lo;
        let x_nodes = (0..=count).map(|k| (lo + k) as f64 * step).collect();
        Self::new(x_nodes, t_nodes, tail_tol, w)
    }

    /// Verifies the tail certificate for a sample of length `len`.
    pub fn check_tails<F: Fn(f64) -> Result<f64>>(&self, cdf: &F, len: usize, d_n: f64) -> Result<()> {
        if self.tail_tol.is_infinite() {
            return Ok(());
        }
        let scale = len as f64 / d_n;
        let lo = self.x_nodes[0];
        let hi = *self.x_nodes.last().unwrap();
        let left = self.weight.eval(lo) * scale * cdf(lo)?;
        let right = self.weight.eval(hi) * scale * (1.0 - cdf(hi)?);
        let step = DEFAULT_MESH_STEP;
        if left >= self.tail_tol {
            let need = tail_extent(
                step,
                |x| Ok(self.weight.eval(x) * scale * cdf(x)?),
                self.tail_tol,
                -1.0,
            )?;
            return Err(Error::TailInadequate(format!(
                "left tail mass {left:e} at x = {lo} exceeds {:e}; extend the grid to x <= {}",
                self.tail_tol,
                need as f64 * step
            )));
        }
        if right >= self.tail_tol {
            let need = tail_extent(
                step,
                |x| Ok(self.weight.eval(x) * scale * (1.0 - cdf(x)?)),
                self.tail_tol,
                1.0,
            )?;
            return Err(Error::TailInadequate(format!(
                "right tail mass {right:e} at x = {hi} exceeds {:e}; extend the grid to x >= {}",
                self.tail_tol,
                need as f64 * step
            )));
        }
        Ok(())
    }

    /// Copy with `extra` x nodes merged in.
    pub fn with_extra_nodes(&self, extra: &[f64]) -> Self {
        let mut xs = merge_nodes(&self.x_nodes, extra);
        xs.dedup();
        Self {
            x_nodes: xs,
            ..self.clone()
        }
    }
}

fn merge_nodes(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = b.iter().copied().filter(|v| v.is_finite()).collect();
    b.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i] <= b[j]);
        let v = if take_a {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// Smallest `k >= 0` such that `mass(dir * k * step) < tol`, returned as `dir * k`.
fn tail_extent<M: Fn(f64) -> Result<f64>>(step: f64, mass: M, tol: f64, dir: f64) -> Result<i64> {
    if tol.is_infinite() {
        return Ok(0);
    }
    let ok = |k: i64| -> Result<bool> { Ok(mass(dir * k as f64 * step)? < tol) };
    if ok(0)? {
        return Ok(0);
    }
    let mut hi = 1i64;
    while !ok(hi)? {
        hi *= 2;
        if hi as f64 * step > 1e7 {
            return Err(Error::TailInadequate(format!(
                "tail mass stays above {tol:e} beyond |x| = 1e7"
            )));
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(dir as i64 * hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `d_N^{-1} R_N(x, t)`.
    RnNormalized,
    /// `S_N(floor(n t), x)`.
    SnRemainder,
}

impl FieldKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::RnNormalized => "rn_normalized",
            Self::SnRemainder => "sn_remainder",
        }
    }
}

/// Values on an `(x, t)` grid, stored x-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalField {
    pub kind: FieldKind,
    pub grid: GridSpec,
    values: Vec<f64>,
    /// Sample length `N`.
    pub len: usize,
    /// Number of summands at `t = 1`: `N` for `R_N`, `n` for `S_N`.
    pub n: usize,
    pub d_n: f64,
}

impl EmpiricalField {
    pub fn from_values(
        kind: FieldKind,
        grid: GridSpec,
        values: Vec<f64>,
        len: usize,
        n: usize,
        d_n: f64,
    ) -> Result<Self> {
        if values.len() != grid.x_nodes.len() * grid.t_nodes.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a {} x {} grid",
                values.len(),
                grid.x_nodes.len(),
                grid.t_nodes.len()
            )));
        }
        Ok(Self {
            kind,
            grid,
            values,
            len,
            n,
            d_n,
        })
    }

    pub fn value(&self, xi: usize, ti: usize) -> f64 {
        self.values[xi * self.grid.t_nodes.len() + ti]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(x, t, value)` in x-major order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let nt = self.grid.t_nodes.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.grid.x_nodes[k / nt], self.grid.t_nodes[k % nt], v))
    }

    /// CSV with columns `x,t,value,kind,N,seed`.
    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64) -> std::io::Result<()> {
        writeln!(out, "x,t,value,kind,N,seed")?;
        for (x, t, v) in self.rows() {
            writeln!(out, "{x},{t},{v},{},{},{seed}", self.kind.label(), self.len)?;
        }
        Ok(())
    }
}

/// `values[xi][ti] = #{j <= n_ti : y_j <= x_xi}` with `n_ti = prefix_len(len, t)`.
fn counts(y: &[f64], grid: &GridSpec, prefix: &[usize]) -> Vec<u64> {
    let nx = grid.x_nodes.len();
    let nt = prefix.len();
    let mut hist = vec![0u64; nx * nt];
    for (j, &yj) in y.iter().enumerate() {
        let b = prefix.partition_point(|&p| p < j + 1);
        if b == nt {
            continue;
        }
        let a = grid.x_nodes.partition_point(|&x| x < yj);
        if a == nx {
            continue;
        }
        hist[a * nt + b] += 1;
    }
    for a in 0..nx {
        for b in 1..nt {
            hist[a * nt + b] += hist[a * nt + b - 1];
        }
    }
    for a in 1..nx {
        for b in 0..nt {
            hist[a * nt + b] += hist[(a - 1) * nt + b];
        }
    }
    hist
}

fn node_values<F: Fn(f64) -> Result<f64>>(grid: &GridSpec, cdf: &F) -> Result<Vec<f64>> {
    grid.x_nodes.iter().map(|&x| cdf(x)).collect()
}

/// `d_N^{-1} R_N(x, t) = d_N^{-1} sum_{j <= floor(Nt)} (1{Y_j <= x} - F(x))` on the grid.
pub fn sequential_empirical<F: Fn(f64) -> Result<f64>>(
    y: &[f64],
    cdf: &F,
    grid: &GridSpec,
    d_n: f64,
) -> Result<EmpiricalField> {
    let len = y.len();
    grid.check_tails(cdf, len, d_n)?;
    let f = node_values(grid, cdf)?;
    let prefix: Vec<usize> = grid.t_nodes.iter().map(|&t| prefix_len(len, t)).collect();
    let c = counts(y, grid, &prefix);
    let nt = prefix.len();
    let values = c
        .iter()
        .enumerate()
        .map(|(k, &cnt)| {
            let n_t = prefix[k % nt] as f64;
            (cnt as f64 - n_t * f[k / nt]) / d_n
        })
        .collect();
    EmpiricalField::from_values(FieldKind::RnNormalized, grid.clone(), values, len, len, d_n)
}

fn check_pair(y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "subordinated sample has {} values, Gaussian path {}",
            y.len(),
            x.len()
        )));
    }
    Ok(())
}

/// `S_N(floor(n t), x) = d_N^{-1} sum_{j <= floor(n t)} (1{Y_j <= x} - F(x) - J_m(x)/m! H_m(X_j))`.
pub fn reduction_remainder(
    y: &[f64],
    x_path: &[f64],
    profile: &HermiteProfile,
    n: usize,
    grid: &GridSpec,
    d_n: f64,
) -> Result<EmpiricalField> {
    check_pair(y, x_path)?;
    let len = y.len();
    if n > len {
        return Err(Error::InvalidInput(format!(
            "n = {n} exceeds the sample length {len}"
        )));
    }
    let nodes: Vec<(f64, f64)> = grid
        .x_nodes
        .iter()
        .map(|&x| profile.cdf_and_leading(x))
        .collect::<Result<_>>()?;
    let prefix: Vec<usize> = grid.t_nodes.iter().map(|&t| prefix_len(n, t)).collect();
    let m = profile.rank();
    let mut hsum = vec![0.0; prefix.len()];
    let mut acc = 0.0;
    let mut next = 0;
    for (ti, &p) in prefix.iter().enumerate() {
        while next < p {
            acc += hermite_eval(m, x_path[next]);
            next += 1;
        }
        hsum[ti] = acc;
    }
    let c = counts(y, grid, &prefix);
    let nt = prefix.len();
    let values = c
        .iter()
        .enumerate()
        .map(|(k, &cnt)| {
            let (f, lead) = nodes[k / nt];
            let ti = k % nt;
            (cnt as f64 - prefix[ti] as f64 * f - lead * hsum[ti]) / d_n
        })
        .collect();
    EmpiricalField::from_values(FieldKind::SnRemainder, grid.clone(), values, len, n, d_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub value: f64,
    pub x: f64,
    pub t: f64,
}

/// `max |w(x) value(x, t)|` over the grid, with the attaining node.
pub fn weighted_sup_norm(field: &EmpiricalField, w: &WeightFunction) -> SupNorm {
    let mut best = SupNorm {
        value: 0.0,
        x: field.grid.x_nodes[0],
        t: field.grid.t_nodes[0],
    };
    for (x, t, v) in field.rows() {
        let a = (w.eval(x) * v).abs();
        if a > best.value {
            best = SupNorm { value: a, x, t };
        }
    }
    best
}

/// Precomputed `F`, `J_m/m!` and `w` at a set of x nodes.
#[derive(Debug, Clone, Default)]
pub struct NodeTable {
    pub x: Vec<f64>,
    pub cdf: Vec<f64>,
    pub lead: Vec<f64>,
    pub weight: Vec<f64>,
}

impl NodeTable {
    pub fn new(profile: &HermiteProfile, x_nodes: &[f64]) -> Result<Self> {
        let w = profile.weight();
        let mut t = Self::default();
        for &x in x_nodes {
            let (f, lead) = profile.cdf_and_leading(x)?;
            t.x.push(x);
            t.cdf.push(f);
            t.lead.push(lead);
            t.weight.push(w.eval(x));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sorted union of `self` with the nodes of `other`.
    pub fn merged(&self, other: &NodeTable) -> NodeTable {
        let mut out = NodeTable::default();
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let take_self = j >= other.len() || (i < self.len() && self.x[i] <= other.x[j]);
            let (src, k) = if take_self {
                i += 1;
                (self, i - 1)
            } else {
                j += 1;
                (other, j - 1)
            };
            if out.x.last() == Some(&src.x[k]) {
                continue;
            }
            out.x.push(src.x[k]);
            out.cdf.push(src.cdf[k]);
            out.lead.push(src.lead[k]);
            out.weight.push(src.weight[k]);
        }
        out
    }
}

/// Offset used for left limits `f(x-)` of right-continuous step functions.
pub fn left_limit_offset(x: f64) -> f64 {
    1e-9 * (1.0 + x.abs())
}

/// Sample points `Y_j` and their left neighbours `Y_j - h`, where the
/// indicator process jumps; sorted and deduplicated.
pub fn jump_nodes(y: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = y
        .iter()
        .flat_map(|&v| [v - left_limit_offset(v), v])
        .filter(|v| v.is_finite())
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionStatistic {
    /// `M_N = max_{n <= N} sup_x |w(x) S_N(n, x)|`.
    pub value: f64,
    /// Attaining number of summands (0 when `M_N = 0`).
    pub n: usize,
    pub x: f64,
}

/// `M_N` over the nodes of `table`, by a single incremental sweep over `n`.
pub fn reduction_statistic_on(
    y: &[f64],
    x_path: &[f64],
    rank: usize,
    table: &NodeTable,
    d_n: f64,
) -> Result<ReductionStatistic> {
    check_pair(y, x_path)?;
    let nx = table.len();
    let mut best = ReductionStatistic {
        value: 0.0,
        n: 0,
        x: table.x.first().copied().unwrap_or(0.0),
    };
    if y.is_empty() || nx == 0 {
        return Ok(best);
    }
    // acc[i] = d_N * S_N(n, x_i)
    let mut acc = vec![0.0; nx];
    let mut best_raw = 0.0;
    for (j, (&yj, &xj)) in y.iter().zip(x_path).enumerate() {
        let h = hermite_eval(rank, xj);
        let split = table.x.partition_point(|&x| x < yj);
        let mut step_max = 0.0f64;
        {
            let (lo, hi) = acc.split_at_mut(split);
            for (((a, f), l), w) in lo
                .iter_mut()
                .zip(&table.cdf[..split])
                .zip(&table.lead[..split])
                .zip(&table.weight[..split])
            {
                *a -= f + l * h;
                let v = (w * *a).abs();
                step_max = if v > step_max { v } else { step_max };
            }
            for (((a, f), l), w) in hi
                .iter_mut()
                .zip(&table.cdf[split..])
                .zip(&table.lead[split..])
                .zip(&table.weight[split..])
            {
                *a += 1.0 - f - l * h;
                let v = (w * *a).abs();
                step_max = if v > step_max { v } else { step_max };
            }
        }
        if step_max > best_raw {
            best_raw = step_max;
            let i = (0..nx)
                .find(|&i| (table.weight[i] * acc[i]).abs() == step_max)
                .unwrap_or(0);
            best = ReductionStatistic {
                value: step_max / d_n,
                n: j + 1,
                x: table.x[i],
            };
        }
    }
    Ok(best)
}

/// `M_N` on the x nodes of `grid` (t nodes are not used: every `n <= N` is swept).
pub fn reduction_statistic(
    y: &[f64],
    x_path: &[f64],
    profile: &HermiteProfile,
    grid: &GridSpec,
    d_n: f64,
) -> Result<ReductionStatistic> {
    let table = NodeTable::new(profile, &grid.x_nodes)?;
    reduction_statistic_on(y, x_path, profile.rank(), &table, d_n)
}
