//! Scalar numerics shared by the analysis modules: the standard normal law,
//! monotone bracketing, real polynomial roots and adaptive quadrature.

use libm::erfc;

use crate::error::{Error, Result};
use crate::process::hermite_eval;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// Standard normal measure of `[lo, hi]`, computed on the side of zero
/// that avoids cancellation.
pub fn normal_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}

pub fn factorial(q: usize) -> f64 {
    (1..=q).fold(1.0, |acc, k| acc * k as f64)
}

/// Locates the switch point of a monotone predicate on `[lo, hi]`, where
/// `pred(lo)` is false and `pred(hi)` is true. Returns the pair of adjacent
/// floats (or a pair closer than `abs_tol`) straddling the switch.
pub fn bisect_switch<P: FnMut(f64) -> bool>(
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    mut pred: P,
) -> (f64, f64) {
    for _ in 0..2000 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi || hi - lo <= abs_tol {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Dense real polynomial `c[0] + c[1] s + ... + c[d] s^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    /// Monomial coefficients of `sum_i c_i H_i(s)` with probabilists' Hermite `H_i`.
    pub fn from_hermite_combo(c: &[f64]) -> Self {
        let mut out = vec![0.0; c.len().max(1)];
        let mut prev: Vec<f64> = vec![1.0];
        let mut cur: Vec<f64> = vec![0.0, 1.0];
        for (i, &ci) in c.iter().enumerate() {
            let basis: &[f64] = match i {
                0 => &prev,
                1 => &cur,
                _ => {
                    // H_i = s H_{i-1} - (i-1) H_{i-2}
                    let mut next = vec![0.0; i + 1];
                    for (k, &a) in cur.iter().enumerate() {
                        next[k + 1] += a;
                    }
                    for (k, &a) in prev.iter().enumerate() {
                        next[k] -= (i - 1) as f64 * a;
                    }
                    prev = std::mem::replace(&mut cur, next);
                    &cur
                }
            };
            for (k, &a) in basis.iter().enumerate() {
                out[k] += ci * a;
            }
        }
        Self::new(out)
    }

    pub fn hermite(order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[order] = 1.0;
        Self::from_hermite_combo(&c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// `self - x` as a new polynomial.
    pub fn shifted(&self, x: f64) -> Self {
        let mut c = self.coeffs.clone();
        c[0] -= x;
        Self::new(c)
    }

    /// Sorted distinct real roots. Critical points (roots of the derivative)
    /// split the line into monotone pieces; each sign change is then bisected
    /// to adjacent floats. Roots of even multiplicity are picked up at the
    /// critical points where the value vanishes.
    pub fn real_roots(&self) -> Vec<f64> {
        let d = self.degree();
        if d == 0 {
            return Vec::new();
        }
        let lead = self.coeffs[d];
        if d == 1 {
            return vec![-self.coeffs[0] / lead];
        }
        let bound = 1.0
            + self.coeffs[..d]
                .iter()
                .map(|c| (c / lead).abs())
                .fold(0.0, f64::max);
        let scale = self.coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let touch_tol = 1e-13 * scale;

        let mut marks = vec![-bound];
        marks.extend(
            self.derivative()
                .real_roots()
                .into_iter()
                .filter(|c| c.abs() < bound),
        );
        marks.push(bound);

        let mut roots: Vec<f64> = Vec::new();
        for w in marks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (pa, pb) = (self.eval(a), self.eval(b));
            if pa.abs() <= touch_tol && a > -bound {
                roots.push(a);
            }
            if pa.abs() > touch_tol && pb.abs() > touch_tol && (pa < 0.0) != (pb < 0.0) {
                let rising = pb > pa;
                let (lo, hi) = bisect_switch(a, b, 0.0, |s| (self.eval(s) > 0.0) == rising);
                let r = if self.eval(lo).abs() <= self.eval(hi).abs() {
                    lo
                } else {
                    hi
                };
                roots.push(r);
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        roots
    }
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over the finite interval `[a, b]`.
/// Returns the value and an error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: (f64, f64),
        tol: f64,
        depth: u32,
    ) -> (f64, f64) {
        if whole.1 <= tol || depth == 0 {
            return whole;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        let l = recurse(f, a, m, left, 0.5 * tol, depth - 1);
        let r = recurse(f, m, b, right, 0.5 * tol, depth - 1);
        (l.0 + r.0, l.1 + r.1)
    }
    let whole = gk15(&f, a, b);
    let (value, err) = recurse(&f, a, b, whole, tol, 40);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("integral over [{a}, {b}]")));
    }
    Ok((value, err))
}

/// `n`-point Gauss rule for the standard normal law: nodes are the roots of
/// `H_n` and weights sum to one.
pub fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let nodes = Polynomial::hermite(n).real_roots();
    let nf = factorial(n);
    let weights = nodes
        .iter()
        .map(|&x| {
            let h = hermite_eval(n - 1, x);
            nf / ((n * n) as f64 * h * h)
        })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(-6.0), 9.865_876_450_376_98e-10, max_relative = 1e-12);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_relative_eq!(normal_mass(8.0, f64::INFINITY), normal_cdf(-8.0));
    }

    #[test]
    fn hermite_combo_to_monomials() {
        // H_3 = s^3 - 3s, H_4 = s^4 - 6 s^2 + 3
        assert_eq!(Polynomial::hermite(3).coeffs(), &[0.0, -3.0, 0.0, 1.0]);
        assert_eq!(Polynomial::hermite(4).coeffs(), &[3.0, 0.0, -6.0, 0.0, 1.0]);
        let p = Polynomial::from_hermite_combo(&[1.0, 0.0, 1.0]);
        assert_eq!(p.coeffs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn roots_of_hermite_polynomials() {
        let r = Polynomial::hermite(3).real_roots();
        assert_eq!(r.len(), 3);
        assert_relative_eq!(r[0], -3f64.sqrt(), epsilon = 1e-14);
        assert!(r[1].abs() < 1e-14);
        assert_relative_eq!(r[2], 3f64.sqrt(), epsilon = 1e-14);
        for n in 1..=12 {
            let roots = Polynomial::hermite(n).real_roots();
            assert_eq!(roots.len(), n, "H_{n}");
            for x in roots {
                assert!(hermite_eval(n, x).abs() < 1e-9 * (1.0 + x.abs()).powi(n as i32));
            }
        }
    }

    #[test]
    fn double_root_is_found() {
        // s^2 has a double root at 0, (s-1)^2 (s+2) has 1 (double) and -2.
        assert_eq!(Polynomial::new(vec![0.0, 0.0, 1.0]).real_roots(), vec![0.0]);
        let p = Polynomial::new(vec![2.0, -3.0, 0.0, 1.0]);
        let r = p.real_roots();
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r[0], -2.0, epsilon = 1e-12);
        assert_relative_eq!(r[1], 1.0, epsilon = 1e-7);
        assert!(Polynomial::new(vec![1.0, 0.0, 1.0]).real_roots().is_empty());
    }

    #[test]
    fn kronrod_integrates_gaussian_moments() {
        let (v, _) = integrate(|s| s.powi(4) * normal_pdf(s), -12.0, 12.0, 1e-13).unwrap();
        assert_relative_eq!(v, 3.0, epsilon = 1e-11);
        let (v, _) = integrate(|s| s.abs().sqrt(), -1.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v, 4.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn five_point_rule_matches_closed_form() {
        let (x, w) = gauss_hermite_rule(5);
        let inner = (5.0 - 10f64.sqrt()).sqrt();
        let outer = (5.0 + 10f64.sqrt()).sqrt();
        assert_relative_eq!(x[2], 0.0, epsilon = 1e-14);
        assert_relative_eq!(x[3], inner, epsilon = 1e-13);
        assert_relative_eq!(x[4], outer, epsilon = 1e-13);
        assert_relative_eq!(w[2], 8.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(w[3], (7.0 + 2.0 * 10f64.sqrt()) / 60.0, epsilon = 1e-13);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
    }
}
