//! Stationary Gaussian sequences with long-range dependence, Hermite
//! polynomials, and subordinated series `Y_j = G(X_j)`.
//!
//! Paths are synthesized exactly by circulant embedding: the Toeplitz
//! covariance of `X_1..X_N` is embedded into a circulant matrix of size `M`
//! (`2N` when lag `N` is available, `2N - 2` otherwise), whose eigenvalues are
//! the FFT of its first row. When they are nonnegative, the real part of
//! `FFT(sqrt(lambda_k / M) * xi_k)` with complex standard normal `xi_k` has
//! exactly the target covariance.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Subordination;

/// Relative magnitude below which negative spectral weights are clamped to zero.
pub const SPECTRAL_TOLERANCE: f64 = 1e-10;

/// Covariance model of the underlying Gaussian sequence; `r(0) = 1` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// Fractional Gaussian noise with Hurst index `1/2 < H < 1`, memory exponent `D = 2 - 2H`.
    Fgn { hurst: f64 },
    /// Independent standard normals.
    White,
    /// User-supplied autocovariances `r(0), r(1), ...` with `r(0) = 1`.
    Explicit { lags: Vec<f64> },
}

impl CovarianceModel {
    pub fn fgn(hurst: f64) -> Result<Self> {
        let model = Self::Fgn { hurst };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fgn { hurst } => check_hurst(*hurst),
            Self::White => Ok(()),
            Self::Explicit { lags } => {
                let r0 = lags
                    .first()
                    .ok_or_else(|| Error::InvalidInput("explicit covariance has no lags".into()))?;
                if (r0 - 1.0).abs() > 1e-12 {
                    return Err(Error::ParameterDomain {
                        name: "r(0)",
                        value: *r0,
                        expected: "{1} (unit variance)",
                    });
                }
                if let Some(bad) = lags.iter().find(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
                    return Err(Error::ParameterDomain {
                        name: "r(k)",
                        value: *bad,
                        expected: "[-1, 1]",
                    });
                }
                Ok(())
            }
        }
    }

    /// Autocovariance at lag `k`, or `None` past the end of an explicit sequence.
    pub fn covariance(&self, k: usize) -> Option<f64> {
        match self {
            Self::Fgn { hurst } => Some(fgn_cov_unchecked(*hurst, k)),
            Self::White => Some(if k == 0 { 1.0 } else { 0.0 }),
            Self::Explicit { lags } => lags.get(k).copied(),
        }
    }

    /// Lags `0..len`.
    pub fn covariances(&self, len: usize) -> Result<Vec<f64>> {
        (0..len)
            .map(|k| {
                self.covariance(k).ok_or_else(|| {
                    Error::InvalidInput(format!("explicit covariance covers {} lags, {len} required", k))
                })
            })
            .collect()
    }

    /// Memory exponent `D` in `r(k) ~ c k^{-D}`. For explicit sequences it is
    /// read off a least-squares fit of `log r(k)` on `log k` over the upper
    /// three quarters of the positive lags. White noise has no long memory.
    pub fn memory_exponent(&self) -> Option<f64> {
        match self {
            Self::Fgn { hurst } => Some(2.0 - 2.0 * hurst),
            Self::White => None,
            Self::Explicit { lags } => {
                let pts: Vec<(f64, f64)> = lags
                    .iter()
                    .enumerate()
                    .skip((lags.len() / 4).max(1))
                    .filter(|(_, r)| **r > 0.0)
                    .map(|(k, r)| ((k as f64).ln(), r.ln()))
                    .collect();
                if pts.len() < 3 {
                    return None;
                }
                let n = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                let d = -sxy / sxx;
                (d > 0.0).then_some(d)
            }
        }
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.5 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "hurst",
            value: hurst,
            expected: "(0.5, 1)",
        })
    }
}

fn fgn_cov_unchecked(hurst: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).powf(h2))
}

/// Autocovariance of fractional Gaussian noise,
/// `r(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2`.
pub fn fgn_covariance(hurst: f64, k: usize) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(fgn_cov_unchecked(hurst, k))
}

/// Probabilists' Hermite polynomial `H_q(x)` by `H_{q+1} = x H_q - q H_{q-1}`.
pub fn hermite_eval(q: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Finalizer of SplitMix64; a bijective 64-bit avalanche mixer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of `seed` for stream `index`:
/// `mix64(seed ^ mix64(index + 0x9E3779B97F4A7C15))`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPath {
    pub values: Vec<f64>,
    pub model: CovarianceModel,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SubordinatedSample {
    pub y: Vec<f64>,
    pub g: Subordination,
    pub seed: u64,
}

enum Synthesis {
    White,
    Circulant {
        sqrt_weights: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
}

/// Reusable exact sampler for paths of a fixed length.
pub struct PathGenerator {
    len: usize,
    synthesis: Synthesis,
}

impl std::fmt::Debug for PathGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let size = match &self.synthesis {
            Synthesis::White => 0,
            Synthesis::Circulant { sqrt_weights, .. } => sqrt_weights.len(),
        };
        f.debug_struct("PathGenerator")
            .field("len", &self.len)
            .field("embedding", &size)
            .finish()
    }
}

/// Eigenvalues of the circulant embedding of `r(0..=half)`, of size `2 * half`.
pub fn circulant_weights(half_row: &[f64]) -> Vec<f64> {
    let h = half_row.len() - 1;
    let m = 2 * h;
    let mut row: Vec<Complex64> = Vec::with_capacity(m);
    row.extend(half_row.iter().map(|&r| Complex64::new(r, 0.0)));
    row.extend(half_row[1..h].iter().rev().map(|&r| Complex64::new(r, 0.0)));
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

impl PathGenerator {
    pub fn new(model: &CovarianceModel, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("path length must be at least 1".into()));
        }
        model.validate()?;
        if matches!(model, CovarianceModel::White) {
            return Ok(Self {
                len,
                synthesis: Synthesis::White,
            });
        }
        let half_row = match model {
            CovarianceModel::Explicit { lags } if lags.len() < len + 1 => {
                if len == 1 {
                    return Ok(Self {
                        len,
                        synthesis: Synthesis::White,
                    });
                }
                model.covariances(len)?
            }
            _ => model.covariances(len + 1)?,
        };
        let weights = circulant_weights(&half_row);
        let m = weights.len();
        let top = weights.iter().cloned().fold(0.0, f64::max);
        let mut sqrt_weights = Vec::with_capacity(m);
        for (index, &w) in weights.iter().enumerate() {
            if w < 0.0 {
                let rel = w / top;
                if rel < -SPECTRAL_TOLERANCE {
                    return Err(Error::EmbeddingFailure { index, weight: rel });
                }
            }
            sqrt_weights.push((w.max(0.0) / m as f64).sqrt());
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(Self {
            len,
            synthesis: Synthesis::Circulant { sqrt_weights, fft },
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// One path, deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.synthesis {
            Synthesis::White => (0..self.len).map(|_| StandardNormal.sample(&mut rng)).collect(),
            Synthesis::Circulant { sqrt_weights, fft } => {
                let mut buf: Vec<Complex64> = sqrt_weights
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf.truncate(self.len);
                buf.into_iter().map(|c| c.re).collect()
            }
        }
    }
}

/// Exact stationary Gaussian path of length `len` for `model`.
pub fn generate_path(model: &CovarianceModel, len: usize, seed: u64) -> Result<GaussianPath> {
    let values = PathGenerator::new(model, len)?.sample(seed);
    Ok(GaussianPath {
        values,
        model: model.clone(),
        seed,
    })
}

/// `Y_j = G(X_j)` elementwise.
pub fn subordinate(path: &GaussianPath, g: &Subordination) -> SubordinatedSample {
    SubordinatedSample {
        y: path.values.iter().map(|&x| g.apply(x)).collect(),
        g: g.clone(),
        seed: path.seed,
    }
}
