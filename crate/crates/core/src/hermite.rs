//! Hermite coefficients of the indicator class `1{G(.) <= x} - F(x)`,
//! the Hermite rank, the marginal `F`, the majorant `Lambda`, the
//! normalization `d_N`, the weight `w` and the moment condition.
//!
//! Every coefficient integral `int_{G(s) <= x} H_q(s) phi(s) ds` is evaluated
//! exactly over the sublevel set of `G`, written as a finite union of
//! intervals, with the antiderivative identity
//! `int_a^b H_q phi = H_{q-1}(a) phi(a) - H_{q-1}(b) phi(b)` for `q >= 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_switch, factorial, integrate, normal_mass, normal_pdf, Polynomial};
use crate::process::{hermite_eval, CovarianceModel};

/// Tolerance below which a coefficient counts as zero when detecting the rank.
pub const RANK_TOLERANCE: f64 = 1e-6;
/// Largest order searched when detecting the rank.
pub const DEFAULT_Q_MAX: usize = 8;

/// Closed interval `[lo, hi]`; infinite endpoints are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }
}

/// A user-supplied nondecreasing map with a bracket `[lo, hi]` outside of
/// which it is taken to stay below (left) or above (right) every level of
/// interest.
#[derive(Clone)]
pub struct MonotoneMap {
    pub name: String,
    pub func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub bracket: (f64, f64),
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneMap")
            .field("name", &self.name)
            .field("bracket", &self.bracket)
            .finish()
    }
}

/// The subordination function `G` in `Y_j = G(X_j)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subordination {
    Identity,
    Square,
    Cube,
    /// `G(s) = sum_i c_i H_i(s)`.
    HermiteCombo {
        coefficients: Vec<f64>,
    },
    #[serde(skip)]
    CustomMonotone(MonotoneMap),
}

impl fmt::Display for Subordination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Square => write!(f, "square"),
            Self::Cube => write!(f, "cube"),
            Self::HermiteCombo { coefficients } => {
                let parts: Vec<String> = coefficients.iter().map(|c| c.to_string()).collect();
                write!(f, "hermite:{}", parts.join(","))
            }
            Self::CustomMonotone(map) => write!(f, "custom:{}", map.name),
        }
    }
}

/// Equality by canonical name; custom maps compare equal when their names do.
impl PartialEq for Subordination {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl std::str::FromStr for Subordination {
    type Err = Error;

    /// Parses `identity`, `square`, `cube` or `hermite:c0,c1,...`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            "cube" => Ok(Self::Cube),
            other => {
                let list = other.strip_prefix("hermite:").ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "unknown subordination `{other}` (expected identity, square, cube or hermite:c0,c1,...)"
                    ))
                })?;
                let coefficients = list
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| Error::InvalidInput(format!("bad Hermite coefficient `{c}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::HermiteCombo { coefficients })
            }
        }
    }
}

impl Subordination {
    pub fn hermite_combo(coefficients: Vec<f64>) -> Self {
        Self::HermiteCombo { coefficients }
    }

    pub fn custom_monotone<F>(name: &str, bracket: (f64, f64), func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::CustomMonotone(MonotoneMap {
            name: name.to_string(),
            func: Arc::new(func),
            bracket,
        })
    }

    pub fn apply(&self, s: f64) -> f64 {
        match self {
            Self::Identity => s,
            Self::Square => s * s,
            Self::Cube => s * s * s,
            Self::HermiteCombo { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(q, c)| if *c == 0.0 { 0.0 } else { c * hermite_eval(q, s) })
                .sum(),
            Self::CustomMonotone(map) => (map.func)(s),
        }
    }

    /// Polynomial form, when `G` is a polynomial.
    pub fn polynomial(&self) -> Option<Polynomial> {
        match self {
            Self::Identity => Some(Polynomial::new(vec![0.0, 1.0])),
            Self::Square => Some(Polynomial::new(vec![0.0, 0.0, 1.0])),
            Self::Cube => Some(Polynomial::new(vec![0.0, 0.0, 0.0, 1.0])),
            Self::HermiteCombo { coefficients } => Some(Polynomial::from_hermite_combo(coefficients)),
            Self::CustomMonotone(_) => None,
        }
    }

    /// `{s : G(s) <= x}` as sorted, disjoint closed intervals.
    pub fn sublevel(&self, x: f64) -> Result<Vec<Interval>> {
        if x.is_nan() {
            return Err(Error::NonFinite("sublevel level".into()));
        }
        match self {
            Self::Identity => Ok(vec![Interval::new(f64::NEG_INFINITY, x)]),
            Self::Square => Ok(if x < 0.0 {
                Vec::new()
            } else {
                let r = x.sqrt();
                vec![Interval::new(-r, r)]
            }),
            Self::Cube => Ok(vec![Interval::new(f64::NEG_INFINITY, x.cbrt())]),
            Self::HermiteCombo { coefficients } => Ok(polynomial_sublevel(
                &Polynomial::from_hermite_combo(coefficients),
                x,
            )),
            Self::CustomMonotone(map) => monotone_sublevel(map, x),
        }
    }
}

fn polynomial_sublevel(g: &Polynomial, x: f64) -> Vec<Interval> {
    let p = g.shifted(x);
    if p.degree() == 0 {
        return if p.eval(0.0) <= 0.0 {
            vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]
        } else {
            Vec::new()
        };
    }
    let roots = p.real_roots();
    if roots.is_empty() {
        return if p.eval(0.0) <= 0.0 {
            vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]
        } else {
            Vec::new()
        };
    }
    let mut cuts = Vec::with_capacity(roots.len() + 2);
    cuts.push(f64::NEG_INFINITY);
    cuts.extend(roots.iter().copied());
    cuts.push(f64::INFINITY);

    let mut out: Vec<Interval> = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let probe = if a.is_infinite() {
            b - 1.0
        } else if b.is_infinite() {
            a + 1.0
        } else {
            0.5 * (a + b)
        };
        if p.eval(probe) <= 0.0 {
            match out.last_mut() {
                Some(last) if last.hi == a => last.hi = b,
                _ => out.push(Interval::new(a, b)),
            }
        }
    }
    // Roots where G touches x from above are isolated points of the sublevel set.
    for &r in &roots {
        if !out.iter().any(|iv| iv.contains(r)) {
            out.push(Interval::new(r, r));
        }
    }
    out.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    out
}

fn monotone_sublevel(map: &MonotoneMap, x: f64) -> Result<Vec<Interval>> {
    let (lo, hi) = map.bracket;
    let eval = |s: f64| -> Result<f64> {
        let v = (map.func)(s);
        if v.is_nan() {
            Err(Error::RootFinding { x })
        } else {
            Ok(v)
        }
    };
    if eval(lo)? > x {
        return Ok(Vec::new());
    }
    if eval(hi)? <= x {
        return Ok(vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]);
    }
    let mut failed = false;
    let (a, _) = bisect_switch(lo, hi, 0.0, |s| {
        let v = (map.func)(s);
        failed |= v.is_nan();
        v > x
    });
    if failed {
        return Err(Error::RootFinding { x });
    }
    Ok(vec![Interval::new(f64::NEG_INFINITY, a)])
}

/// `H_{q-1}(s) phi(s)`, zero at infinite `s`.
fn antiderivative_term(q: usize, s: f64) -> f64 {
    if s.is_infinite() {
        0.0
    } else {
        hermite_eval(q - 1, s) * normal_pdf(s)
    }
}

fn integral_hq(q: usize, iv: &Interval) -> f64 {
    if q == 0 {
        normal_mass(iv.lo, iv.hi)
    } else {
        antiderivative_term(q, iv.lo) - antiderivative_term(q, iv.hi)
    }
}

/// `J_q(x) = int_{G(s) <= x} H_q(s) phi(s) ds`. For `q = 0` this is the
/// uncentered value `F(x)`; the centered indicator has zeroth coefficient 0.
pub fn hermite_coefficient(g: &Subordination, q: usize, x: f64) -> Result<f64> {
    Ok(g.sublevel(x)?.iter().map(|iv| integral_hq(q, iv)).sum())
}

/// Normalized Hermite function value `H_q(x) / sqrt(q!)`, stable for large `q`.
pub fn hermite_normalized(q: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for k in 1..q {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `sum_{q = from}^{to} J_q(x)^2 / q!`, evaluated through normalized Hermite
/// functions so that large orders do not overflow.
pub fn parseval_partial_sum(g: &Subordination, x: f64, from: usize, to: usize) -> Result<f64> {
    // Finite endpoints with sign +1 (lower) or -1 (upper), each carrying the
    // recurrence state (h_{k-1}, h_k) of the normalized Hermite functions.
    struct Endpoint {
        s: f64,
        sign: f64,
        prev: f64,
        cur: f64,
    }
    let mut ends: Vec<Endpoint> = Vec::new();
    for iv in g.sublevel(x)? {
        for (s, sign) in [(iv.lo, 1.0), (iv.hi, -1.0)] {
            if s.is_finite() {
                ends.push(Endpoint {
                    s,
                    sign,
                    prev: 0.0,
                    cur: 1.0,
                });
            }
        }
    }
    let mut total = 0.0;
    // Invariant at the top of iteration q: `cur` holds h_{q-1}(s).
    for q in 1..=to {
        if q >= from {
            let scaled: f64 =
                ends.iter().map(|e| e.sign * e.cur * normal_pdf(e.s)).sum::<f64>() / (q as f64).sqrt();
            total += scaled * scaled;
        }
        let k = (q - 1) as f64;
        for e in ends.iter_mut() {
            let next = (e.s * e.cur - k.sqrt() * e.prev) / (k + 1.0).sqrt();
            e.prev = e.cur;
            e.cur = next;
        }
    }
    Ok(total)
}

/// `F(x) = P(G(Z) <= x)` for standard normal `Z`.
pub fn marginal_cdf(g: &Subordination, x: f64) -> Result<f64> {
    Ok(g.sublevel(x)?.iter().map(|iv| normal_mass(iv.lo, iv.hi)).sum())
}

/// The default rank-detection grid `[-8, 8]` with step `0.05`.
pub fn default_rank_grid() -> Vec<f64> {
    (0..=320).map(|i| -8.0 + 0.05 * i as f64).collect()
}

/// Smallest `q` in `1..=q_max` with `max_grid |J_q| > tol`.
pub fn hermite_rank(g: &Subordination, grid: &[f64], tol: f64, q_max: usize) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("rank grid is empty".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain {
            name: "tol",
            value: tol,
            expected: "(0, inf)",
        });
    }
    let sublevels: Vec<Vec<Interval>> = grid.iter().map(|&x| g.sublevel(x)).collect::<Result<_>>()?;
    for q in 1..=q_max {
        let peak = sublevels
            .iter()
            .map(|ivs| ivs.iter().map(|iv| integral_hq(q, iv)).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if peak > tol {
            return Ok(q);
        }
    }
    Err(Error::RankUndetected { q_max, tol })
}

/// Exact `d_N = sqrt(Var(sum_{j<=N} H_m(X_j)))
/// = sqrt(m! * sum_{|i|<N} (N - |i|) r(i)^m)`.
pub fn normalization_dn(model: &CovarianceModel, m: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("d_N needs N >= 1".into()));
    }
    let r = model.covariances(n)?;
    let nf = n as f64;
    let mut acc = nf;
    for (i, ri) in r.iter().enumerate().skip(1) {
        acc += 2.0 * (nf - i as f64) * ri.powi(m as i32);
    }
    Ok((factorial(m) * acc).sqrt())
}

/// `Lambda(x) = F(x) + int 1{G(s) <= x} |H_m(s)| / m! phi(s) ds`.
pub fn lambda_majorant(g: &Subordination, m: usize, x: f64) -> Result<f64> {
    let roots = Polynomial::hermite(m).real_roots();
    majorant_with_roots(g, m, &roots, x)
}

fn abs_hm_mass(m: usize, roots: &[f64], iv: &Interval) -> f64 {
    let mut acc = 0.0;
    let mut a = iv.lo;
    for &r in roots.iter().filter(|&&r| r > iv.lo && r < iv.hi) {
        acc += integral_hq(m, &Interval::new(a, r)).abs();
        a = r;
    }
    acc + integral_hq(m, &Interval::new(a, iv.hi)).abs()
}

fn majorant_with_roots(g: &Subordination, m: usize, roots: &[f64], x: f64) -> Result<f64> {
    let ivs = g.sublevel(x)?;
    let f: f64 = ivs.iter().map(|iv| normal_mass(iv.lo, iv.hi)).sum();
    let h: f64 = ivs.iter().map(|iv| abs_hm_mass(m, roots, iv)).sum();
    Ok(f + h / factorial(m))
}

/// Weight `w(x) = (1 + |x|)^lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub lambda: f64,
}

impl WeightFunction {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::ParameterDomain {
                name: "lambda",
                value: lambda,
                expected: "[0, inf)",
            })
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.lambda == 0.0 {
            1.0
        } else {
            (1.0 + x.abs()).powf(self.lambda)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub delta: f64,
    /// `E|G(Z)|^delta` truncated to `[-12, 12]`.
    pub value: f64,
    pub quadrature_error: f64,
    /// Largest integrand value at the truncation points.
    pub tail_density: f64,
    pub divergence_risk: bool,
}

const MOMENT_RADIUS: f64 = 12.0;
const MOMENT_TAIL_TOL: f64 = 1e-12;

/// `int |x|^delta dF(x) = E|G(Z)|^delta` by adaptive quadrature over `[-12, 12]`.
pub fn moment_estimate(g: &Subordination, delta: f64) -> Result<MomentEstimate> {
    if !(delta > 0.0) {
        return Err(Error::ParameterDomain {
            name: "delta",
            value: delta,
            expected: "(0, inf)",
        });
    }
    let integrand = |s: f64| g.apply(s).abs().powf(delta) * normal_pdf(s);
    let mut cuts = vec![-MOMENT_RADIUS, 0.0, MOMENT_RADIUS];
    if let Some(p) = g.polynomial() {
        cuts.extend(p.real_roots().into_iter().filter(|r| r.abs() < MOMENT_RADIUS));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut value = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let (v, e) = integrate(integrand, w[0], w[1], 1e-13)?;
        value += v;
        err += e;
    }
    let tail_density = integrand(-MOMENT_RADIUS).max(integrand(MOMENT_RADIUS));
    if !tail_density.is_finite() {
        return Err(Error::NonFinite(
            "moment integrand at the truncation points".into(),
        ));
    }
    Ok(MomentEstimate {
        delta,
        value,
        quadrature_error: err,
        tail_density,
        divergence_risk: tail_density > MOMENT_TAIL_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSup {
    pub value: f64,
    pub argmax: f64,
    /// Radius `R` at which doubling to `2R` changed the supremum by less than `1e-10`.
    pub radius: f64,
    /// The change observed at that doubling.
    pub change: f64,
}

const SUP_STABLE_TOL: f64 = 1e-10;
const SUP_MAX_RADIUS: f64 = 1e6;

fn sup_grid(radius: f64) -> Vec<f64> {
    let core = radius.min(16.0);
    let steps = (2.0 * core / 0.01).round() as usize;
    let mut xs: Vec<f64> = (0..=steps).map(|i| -core + 0.01 * i as f64).collect();
    let mut x = core * 1.01;
    while x < radius {
        xs.push(x);
        xs.push(-x);
        x *= 1.01;
    }
    if radius > core {
        xs.push(radius);
        xs.push(-radius);
    }
    xs
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_8;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn sup_at_radius<F: Fn(f64) -> f64>(f: &F, radius: f64) -> (f64, f64) {
    let mut xs = sup_grid(radius);
    xs.sort_by(f64::total_cmp);
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = xs[best_i.saturating_sub(1)];
    let hi = xs[(best_i + 1).min(xs.len() - 1)];
    let (xr, vr) = golden_max(f, lo, hi);
    if vr > best {
        (vr, xr)
    } else {
        (best, xs[best_i])
    }
}

/// `sup_x |w(x) J_q(x)|` over grids of doubling radius, starting at 8, until
/// the supremum changes by less than `1e-10`.
pub fn weighted_coefficient_sup(g: &Subordination, q: usize, lambda: f64) -> Result<WeightedSup> {
    let w = WeightFunction::new(lambda)?;
    // Probe the map once so that root-finding failures surface as errors.
    hermite_coefficient(g, q, 0.0)?;
    let f = |x: f64| (w.eval(x) * hermite_coefficient(g, q, x).unwrap_or(f64::NAN)).abs();
    let mut radius = 8.0;
    let (mut value, mut argmax) = sup_at_radius(&f, radius);
    loop {
        let (next, next_arg) = sup_at_radius(&f, 2.0 * radius);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!(
                "w * J_{q} on the radius {} grid",
                2.0 * radius
            )));
        }
        let change = (next - value).abs();
        if change < SUP_STABLE_TOL {
            return Ok(WeightedSup {
                value: next.max(value),
                argmax: if next >= value { next_arg } else { argmax },
                radius,
                change,
            });
        }
        radius *= 2.0;
        value = next;
        argmax = next_arg;
        if radius > SUP_MAX_RADIUS {
            return Err(Error::BoundednessViolation { radius, change });
        }
    }
}

/// Everything the limit theory needs about one `G`: rank `m`, the moment
/// exponent `delta`, the weight exponent `lambda` and cached roots of `H_m`.
#[derive(Debug, Clone)]
pub struct HermiteProfile {
    g: Subordination,
    rank: usize,
    delta: f64,
    lambda: f64,
    lambda_overridden: bool,
    hm_roots: Vec<f64>,
}

impl HermiteProfile {
    /// Detects the rank on the default grid; `lambda = delta / 3`.
    pub fn detect(g: Subordination, delta: f64) -> Result<Self> {
        let rank = hermite_rank(&g, &default_rank_grid(), RANK_TOLERANCE, DEFAULT_Q_MAX)?;
        Self::with_rank(g, rank, delta)
    }

    pub fn with_rank(g: Subordination, rank: usize, delta: f64) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidInput("Hermite rank must be positive".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::ParameterDomain {
                name: "delta",
                value: delta,
                expected: "(0, inf)",
            });
        }
        Ok(Self {
            g,
            rank,
            delta,
            lambda: delta / 3.0,
            lambda_overridden: false,
            hm_roots: Polynomial::hermite(rank).real_roots(),
        })
    }

    /// Experimental: replace `lambda = delta / 3` (e.g. by `delta / 2`).
    pub fn with_lambda_override(mut self, lambda: f64) -> Result<Self> {
        WeightFunction::new(lambda)?;
        self.lambda = lambda;
        self.lambda_overridden = true;
        Ok(self)
    }

    pub fn g(&self) -> &Subordination {
        &self.g
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_overridden(&self) -> bool {
        self.lambda_overridden
    }

    pub fn weight(&self) -> WeightFunction {
        WeightFunction { lambda: self.lambda }
    }

    pub fn coefficient(&self, q: usize, x: f64) -> Result<f64> {
        hermite_coefficient(&self.g, q, x)
    }

    /// `J_m(x) / m!`.
    pub fn leading_term(&self, x: f64) -> Result<f64> {
        Ok(self.coefficient(self.rank, x)? / factorial(self.rank))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        marginal_cdf(&self.g, x)
    }

    /// `F(x)` and `J_m(x) / m!` from a single sublevel solve.
    pub fn cdf_and_leading(&self, x: f64) -> Result<(f64, f64)> {
        let ivs = self.g.sublevel(x)?;
        let f = ivs.iter().map(|iv| normal_mass(iv.lo, iv.hi)).sum();
        let j: f64 = ivs.iter().map(|iv| integral_hq(self.rank, iv)).sum();
        Ok((f, j / factorial(self.rank)))
    }

    pub fn majorant(&self, x: f64) -> Result<f64> {
        majorant_with_roots(&self.g, self.rank, &self.hm_roots, x)
    }

    /// `Lambda(inf) = 1 + E|H_m(Z)| / m!`.
    pub fn majorant_limit(&self) -> f64 {
        let whole = Interval::new(f64::NEG_INFINITY, f64::INFINITY);
        1.0 + abs_hm_mass(self.rank, &self.hm_roots, &whole) / factorial(self.rank)
    }

    /// First order with `|J_q(x)| > tol`, the pointwise rank `m(x)`.
    pub fn pointwise_rank(&self, x: f64, tol: f64, q_max: usize) -> Result<Option<usize>> {
        for q in 1..=q_max {
            if self.coefficient(q, x)?.abs() > tol {
                return Ok(Some(q));
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_cdf;
    use approx::assert_relative_eq;

    /// Adaptive quadrature of `H_q phi` over the sublevel set, found by brute
    /// force on a fine scan of `G`: independent of the antiderivative route.
    fn quadrature_coefficient(g: &Subordination, q: usize, x: f64) -> f64 {
        let inside = |s: f64| g.apply(s) <= x;
        let mut total = 0.0;
        let step = 1e-3;
        let mut a = -12.0;
        while a < 12.0 {
            let b = a + step;
            let f = |s: f64| {
                if inside(s) {
                    hermite_eval(q, s) * normal_pdf(s)
                } else {
                    0.0
                }
            };
            if inside(a) == inside(b) {
                total += integrate(f, a, b, 1e-15).unwrap().0;
            } else {
                // Locate the crossing, then integrate both sides.
                let (l, _) = bisect_switch(a, b, 0.0, |s| inside(s) != inside(a));
                total += integrate(f, a, l, 1e-15).unwrap().0 + integrate(f, l, b, 1e-15).unwrap().0;
            }
            a = b;
        }
        total
    }

    #[test]
    fn coefficient_examples() {
        let j = hermite_coefficient(&Subordination::Identity, 1, 0.0).unwrap();
        assert_relative_eq!(j, -0.398_942_280_401_432_7, epsilon = 1e-15);
        assert!((j - quadrature_coefficient(&Subordination::Identity, 1, 0.0)).abs() < 1e-9);

        for x in [-1.0, 0.3, 2.0, 9.0] {
            assert_eq!(hermite_coefficient(&Subordination::Square, 1, x).unwrap(), 0.0);
        }

        let j = hermite_coefficient(&Subordination::Square, 2, 1.0).unwrap();
        assert_relative_eq!(j, -2.0 * normal_pdf(1.0), epsilon = 1e-15);
        assert_relative_eq!(j, -0.483_941_449_038_286_7, epsilon = 1e-12);
        assert!((j - quadrature_coefficient(&Subordination::Square, 2, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn coefficients_agree_with_quadrature_for_polynomial_maps() {
        let g = Subordination::hermite_combo(vec![0.0, 0.0, 0.0, 1.0]);
        for &x in &[-3.0, -0.5, 0.0, 1.7] {
            for q in 1..=4 {
                let exact = hermite_coefficient(&g, q, x).unwrap();
                let quad = quadrature_coefficient(&g, q, x);
                assert!((exact - quad).abs() < 1e-9, "q={q} x={x}: {exact} vs {quad}");
            }
        }
    }

    #[test]
    fn identity_closed_form() {
        for q in 1..=6 {
            for &x in &[-3.2, -1.0, 0.0, 0.4, 2.5] {
                let j = hermite_coefficient(&Subordination::Identity, q, x).unwrap();
                let closed = -hermite_eval(q - 1, x) * normal_pdf(x);
                assert!((j - closed).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn sublevel_sets() {
        assert_eq!(
            Subordination::Square.sublevel(4.0).unwrap(),
            vec![Interval::new(-2.0, 2.0)]
        );
        assert!(Subordination::Square.sublevel(-0.5).unwrap().is_empty());
        // H_3(s) = s^3 - 3s <= 0 on (-inf, -sqrt3] and [0, sqrt3].
        let g = Subordination::hermite_combo(vec![0.0, 0.0, 0.0, 1.0]);
        let ivs = g.sublevel(0.0).unwrap();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[0].lo, f64::NEG_INFINITY);
        assert_relative_eq!(ivs[0].hi, -3f64.sqrt(), epsilon = 1e-14);
        assert!(ivs[1].lo.abs() < 1e-14);
        assert_relative_eq!(ivs[1].hi, 3f64.sqrt(), epsilon = 1e-14);
        for iv in &ivs {
            let mid = if iv.lo.is_infinite() {
                iv.hi - 1.0
            } else {
                0.5 * (iv.lo + iv.hi)
            };
            assert!(g.apply(mid) <= 0.0);
        }
        // s^2 written as H_2 + H_0 touches 0 at a single point.
        let sq = Subordination::hermite_combo(vec![1.0, 0.0, 1.0]);
        assert_eq!(sq.sublevel(0.0).unwrap(), vec![Interval::new(0.0, 0.0)]);
    }

    #[test]
    fn monotone_custom_map() {
        let g = Subordination::custom_monotone("exp", (-40.0, 40.0), f64::exp);
        let ivs = g.sublevel(1.0).unwrap();
        assert_eq!(ivs.len(), 1);
        assert!(ivs[0].hi.abs() < 1e-15);
        assert_relative_eq!(marginal_cdf(&g, 1.0).unwrap(), 0.5, epsilon = 1e-14);
        assert!(g.sublevel(-1.0).unwrap().is_empty());
        let bad = Subordination::custom_monotone("nan", (-1.0, 1.0), |s| if s > 0.5 { f64::NAN } else { s });
        assert!(matches!(bad.sublevel(0.7), Err(Error::RootFinding { .. })));
    }

    #[test]
    fn ranks() {
        let grid = default_rank_grid();
        assert_eq!(grid.len(), 321);
        assert_eq!(hermite_rank(&Subordination::Identity, &grid, 1e-6, 8).unwrap(), 1);
        assert_eq!(hermite_rank(&Subordination::Square, &grid, 1e-6, 8).unwrap(), 2);
        assert_eq!(hermite_rank(&Subordination::Cube, &grid, 1e-6, 8).unwrap(), 1);
        let h3 = Subordination::hermite_combo(vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(hermite_rank(&h3, &grid, 1e-6, 8).unwrap(), 1);
        let constant = Subordination::hermite_combo(vec![2.0]);
        assert!(matches!(
            hermite_rank(&constant, &grid, 1e-6, 8),
            Err(Error::RankUndetected { q_max: 8, .. })
        ));
    }

    #[test]
    fn normalization_examples() {
        assert_relative_eq!(
            normalization_dn(&CovarianceModel::White, 1, 100).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            normalization_dn(&CovarianceModel::White, 2, 50).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        let fgn = CovarianceModel::Fgn { hurst: 0.75 };
        let r1 = 2f64.powf(1.5) / 2.0 - 1.0;
        assert_relative_eq!(
            normalization_dn(&fgn, 1, 2).unwrap(),
            (2.0 + 2.0 * r1).sqrt(),
            epsilon = 1e-12
        );
        assert!((normalization_dn(&fgn, 1, 2).unwrap() - 1.6818).abs() < 1e-4);
        // fGn partial sums are fBm: d_N^2 = N^{2H} for m = 1.
        assert_relative_eq!(
            normalization_dn(&fgn, 1, 4096).unwrap(),
            4096f64.powf(0.75),
            max_relative = 1e-12
        );
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(marginal_cdf(&Subordination::Identity, 0.0).unwrap(), 0.5);
        assert_relative_eq!(
            marginal_cdf(&Subordination::Square, 1.0).unwrap(),
            2.0 * normal_cdf(1.0) - 1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            marginal_cdf(&Subordination::Square, 1.0).unwrap(),
            0.682_689_492_137_085_9,
            epsilon = 1e-12
        );
        assert_eq!(marginal_cdf(&Subordination::Square, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn majorant_examples() {
        let id = Subordination::Identity;
        assert!(lambda_majorant(&id, 1, -40.0).unwrap() < 1e-12);
        assert_relative_eq!(
            lambda_majorant(&id, 1, 0.0).unwrap(),
            0.5 + normal_pdf(0.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            lambda_majorant(&id, 1, 0.0).unwrap(),
            0.898_942_280_401_432_7,
            epsilon = 1e-12
        );
        assert_eq!(lambda_majorant(&Subordination::Square, 2, -1.0).unwrap(), 0.0);
        let (v, _) = integrate(|s| s.abs() * normal_pdf(s), -12.0, 0.0, 1e-14).unwrap();
        assert!((lambda_majorant(&id, 1, 0.0).unwrap() - 0.5 - v).abs() < 1e-9);
        let p = HermiteProfile::detect(id, 3.0).unwrap();
        assert_relative_eq!(p.majorant_limit(), 1.0 + 2.0 * normal_pdf(0.0), epsilon = 1e-14);
    }

    #[test]
    fn moment_examples() {
        let m = moment_estimate(&Subordination::Identity, 2.0).unwrap();
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-10);
        assert!(!m.divergence_risk);
        assert_relative_eq!(
            moment_estimate(&Subordination::Square, 1.0).unwrap().value,
            1.0,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            moment_estimate(&Subordination::Identity, 4.0).unwrap().value,
            3.0,
            epsilon = 1e-10
        );
        let heavy = Subordination::custom_monotone("exp-sq", (-30.0, 30.0), |s: f64| {
            s.signum() * (0.5 * s * s).exp()
        });
        assert!(moment_estimate(&heavy, 1.0).unwrap().divergence_risk);
        assert!(moment_estimate(&Subordination::Identity, 0.0).is_err());
    }

    #[test]
    fn weighted_sup_examples() {
        // Dense grid-search oracle for (1 + |x|) phi(x).
        let oracle = (0..=200_000)
            .map(|i| -10.0 + 1e-4 * i as f64)
            .map(|x| (1.0 + f64::abs(x)) * normal_pdf(x))
            .fold(0.0, f64::max);
        let s = weighted_coefficient_sup(&Subordination::Identity, 1, 1.0).unwrap();
        assert!((s.value - oracle).abs() < 1e-8, "{} vs {oracle}", s.value);
        assert!(s.value.is_finite() && s.radius <= 16.0);

        let s = weighted_coefficient_sup(&Subordination::Square, 1, 1.0).unwrap();
        assert_eq!(s.value, 0.0);

        let s = weighted_coefficient_sup(&Subordination::Identity, 2, 0.0).unwrap();
        assert_relative_eq!(s.value, normal_pdf(1.0), epsilon = 1e-12);
        assert_relative_eq!(s.value, 0.241_970_724_519_143_37, epsilon = 1e-12);
        assert_relative_eq!(s.argmax.abs(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn weighted_sup_detects_unbounded_weighting() {
        // Tails P(Y > y) ~ 1 / y^2 beaten by w(y) = (1 + y)^3.
        let g = Subordination::custom_monotone("exp-sq", (-60.0, 60.0), |s: f64| {
            s.signum() * (0.25 * s * s).exp()
        });
        assert!(matches!(
            weighted_coefficient_sup(&g, 1, 3.0),
            Err(Error::BoundednessViolation { .. })
        ));
    }

    #[test]
    fn parseval_partial_sums_increase_toward_variance() {
        for &x in &[-1.0, 0.0, 1.0] {
            let f = normal_cdf(x);
            let target = f * (1.0 - f);
            let direct: f64 = (1..=30)
                .map(|q| {
                    hermite_coefficient(&Subordination::Identity, q, x)
                        .unwrap()
                        .powi(2)
                        / factorial(q)
                })
                .sum();
            let stable = parseval_partial_sum(&Subordination::Identity, x, 1, 30).unwrap();
            assert!((direct - stable).abs() < 1e-13);
            let mut prev = 0.0;
            for q in [10, 30, 100, 1000, 20_000] {
                let s = parseval_partial_sum(&Subordination::Identity, x, 1, q).unwrap();
                assert!(s >= prev && s <= target + 1e-12);
                prev = s;
            }
            // The gap of an indicator decays like Q^{-1/2}.
            assert!(target - prev < 2e-3, "x={x} gap {}", target - prev);
        }
    }

    #[test]
    fn majorant_dominates_increments() {
        for g in [
            Subordination::Identity,
            Subordination::Square,
            Subordination::Cube,
        ] {
            let p = HermiteProfile::detect(g, 3.0).unwrap();
            let xs: Vec<f64> = (0..=160).map(|i| -8.0 + 0.1 * i as f64).collect();
            let vals: Vec<(f64, f64, f64)> = xs
                .iter()
                .map(|&x| {
                    let (f, j) = p.cdf_and_leading(x).unwrap();
                    (f, j, p.majorant(x).unwrap())
                })
                .collect();
            for i in 0..vals.len() {
                for k in i..vals.len() {
                    let dl = vals[k].2 - vals[i].2;
                    assert!(dl >= -1e-14);
                    assert!(dl + 1e-14 >= vals[k].0 - vals[i].0);
                    assert!(dl + 1e-14 >= (vals[k].1 - vals[i].1).abs());
                }
            }
        }
    }
}
