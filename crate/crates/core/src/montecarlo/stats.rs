use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// One-sample Kolmogorov-Smirnov distance `sup |F_hat - F|`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("KS distance of an empty sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_hat_1 - F_hat_2|`.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("KS distance of an empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Ordinary least-squares line with the standard error of the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Half-width of the 95% Student-t interval for the slope.
    pub half_width: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn upper(&self) -> f64 {
        self.slope + self.half_width
    }
}

pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "insufficient data: slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput(
            "insufficient data: abscissae coincide".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let dof = n - 2.0;
    let slope_se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        half_width: t * slope_se,
        points: points.len(),
    })
}

/// Sample mean and the standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Whether `values[i + 1] <= values[i] + 2 sqrt(se_i^2 + se_{i+1}^2)` at every
/// step; returns the indices `i + 1` that break it.
pub fn nonincreasing_violations(values: &[f64], se: &[f64]) -> Vec<usize> {
    (1..values.len())
        .filter(|&i| {
            let tol = 2.0 * (se[i - 1].powi(2) + se[i].powi(2)).sqrt();
            values[i] > values[i - 1] + tol
        })
        .collect()
}

/// Trend test for a KS sequence along a length ladder: the OLS slope of KS on
/// `ln N` must not exceed two standard errors, where the KS noise level is
/// taken as `0.26 / sqrt(r_eff)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub slope: f64,
    pub slope_se: f64,
    pub passed: bool,
}

pub fn ks_trend(lens: &[usize], ks: &[f64], r_eff: f64) -> Option<TrendCheck> {
    if lens.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = lens.iter().map(|&n| (n as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ks.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ks).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let slope_se = 0.26 / r_eff.sqrt() / sxx.sqrt();
    Some(TrendCheck {
        slope,
        slope_se,
        passed: slope <= 2.0 * slope_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_cdf;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[0.0], normal_cdf).unwrap(), 0.5);
        let n = 200;
        // Reference quantiles of the uniform law.
        let q: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let d = ks_distance(&q, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d <= 0.5 / n as f64 + 1e-15);
        assert_eq!(ks_distance_two_sample(&q, &q).unwrap(), 0.0);
        assert_eq!(ks_distance_two_sample(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        assert!(ks_distance(&[], normal_cdf).is_err());
    }

    #[test]
    fn slope_examples() {
        let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - i as f64)).collect();
        let fit = slope_fit(&line).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-14);
        assert!(fit.half_width < 1e-12);
        let pts: Vec<(f64, f64)> = [64.0f64, 128.0, 256.0, 512.0]
            .iter()
            .map(|n| (n.ln(), (4.0 / n).ln()))
            .collect();
        let fit = slope_fit(&pts).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 4f64.ln(), epsilon = 1e-12);
        let flat = slope_fit(&[(1.0, 0.2), (2.0, 0.2), (3.0, 0.2)]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert!(slope_fit(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
    }

    #[test]
    fn student_t_interval_width() {
        // One residual degree of freedom: t_{0.975, 1} = 12.7062047364...
        let fit = slope_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        let se = (2.0f64 / 3.0 / 2.0).sqrt();
        assert_relative_eq!(fit.slope_se, se, epsilon = 1e-14);
        assert_relative_eq!(fit.half_width / se, 12.706_204_736_432_1, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn ks_is_a_distance(a in prop::collection::vec(-5.0f64..5.0, 1..40), b in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let ab = ks_distance_two_sample(&a, &b).unwrap();
            let ba = ks_distance_two_sample(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
            let one = ks_distance(&a, normal_cdf).unwrap();
            prop_assert!((0.0..=1.0).contains(&one));
        }
    }
}
