//! Sampling of the limiting Gaussian process X(u) = int_[0,inf) e^{-uy} dB(y)
//! and its covariance kernel 1/(u+v).
//!
//! The reference sampler discretizes the stochastic integral (its bias is
//! certifiable); a Cholesky factorization of the Cauchy kernel matrix serves
//! as a cross-check, since that matrix is severely ill-conditioned for dense
//! grids.

use crate::rng::StreamKey;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitProcessError {
    #[error("covariance argument must be positive, got ({u}, {v})")]
    NonPositiveArgument { u: f64, v: f64 },
    #[error("u grid invalid: {0}")]
    BadGrid(String),
    #[error("Cholesky factorization failed for n = {n} even at jitter {max_jitter:.1e} (pivot {pivot:.3e} at row {row}); coarsen the grid")]
    FactorizationFailed { n: usize, max_jitter: f64, pivot: f64, row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    IntegralDiscretization,
    Cholesky,
}

/// Draws of the process on a fixed u grid.
#[derive(Debug, Clone)]
pub struct LimitProcessSample {
    pub u_grid: Vec<f64>,
    /// n_samples rows, |u_grid| columns.
    pub values: Vec<Vec<f64>>,
    pub method: SampleMethod,
    /// Certified bound on the covariance bias of the method.
    pub cov_error_bound: f64,
}

/// E[X(u) X(v)] = 1/(u+v).
pub fn limit_covariance(u: f64, v: f64) -> Result<f64, LimitProcessError> {
    if !(u > 0.0) || !(v > 0.0) {
        return Err(LimitProcessError::NonPositiveArgument { u, v });
    }
    Ok(1.0 / (u + v))
}

fn validate_grid(u_grid: &[f64]) -> Result<(), LimitProcessError> {
    if u_grid.is_empty() {
        return Err(LimitProcessError::BadGrid("empty".into()));
    }
    if u_grid.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
        return Err(LimitProcessError::BadGrid(format!("non-positive entry in {u_grid:?}")));
    }
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LimitProcessError::BadGrid(format!(
            "entries must be strictly increasing, got {u_grid:?}"
        )));
    }
    Ok(())
}

/// Default integration horizon: tail mass e^{-2 u_min Y} is ~1e-18.
pub fn default_horizon(u_min: f64) -> f64 {
    20.0 / u_min
}

/// Default mesh, fine enough that the Riemann bias u_max*delta is <= 1%.
pub fn default_mesh(u_max: f64) -> f64 {
    (1.0 / (100.0 * u_max)).min(1e-3)
}

/// Salt of the Brownian increments (shares the scheme of the walk module;
/// the noise channel uses salts 4 and 5).
const NOISE_SALT: u64 = 4;

/// Discretized stochastic integral: values[i][j] = sum_m e^{-u_j m delta} dB_m
/// with dB_m ~ Normal(0, delta) keyed by (seed, i, m). Deterministic in
/// (seed, i) regardless of worker count.
pub fn sample_integral(
    u_grid: &[f64],
    horizon: f64,
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<LimitProcessSample, LimitProcessError> {
    validate_grid(u_grid)?;
    if !(horizon > 0.0) || !(delta > 0.0) {
        return Err(LimitProcessError::BadGrid(format!(
            "horizon {horizon} and mesh {delta} must be positive"
        )));
    }
    let n_steps = (horizon / delta).floor() as u64; // y_m = m*delta <= horizon
    let sqrt_delta = delta.sqrt();
    // Per-step decay factors e^{-u_j delta}, applied recursively.
    let ratios: Vec<f64> = u_grid.iter().map(|&u| (-u * delta).exp()).collect();

    let values: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::new(seed, i);
            let mut acc = vec![0.0f64; u_grid.len()];
            let mut weight = vec![1.0f64; u_grid.len()];
            for m in 0..=n_steps {
                let db = sqrt_delta * key.normal(m, NOISE_SALT);
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += weight[j] * db;
                    weight[j] *= ratios[j];
                }
            }
            acc
        })
        .collect();

    let u_min = u_grid[0];
    let u_max = u_grid[u_grid.len() - 1];
    let cov_error_bound = (-2.0 * u_min * horizon).exp() / (2.0 * u_min) + u_max * delta;
    Ok(LimitProcessSample {
        u_grid: u_grid.to_vec(),
        values,
        method: SampleMethod::IntegralDiscretization,
        cov_error_bound,
    })
}

/// Lower-triangular Cholesky factor of `a` (row-major, n x n), in place.
/// Returns the failing (row, pivot) on a non-positive pivot.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), (usize, f64)> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err((i, sum));
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Maximum jitter tried before giving up.
const MAX_JITTER: f64 = 1e-8;

/// Exact multivariate-normal draws with covariance [1/(u_i+u_j)] (up to
/// jitter), via Cholesky with escalating diagonal jitter.
pub fn sample_cholesky(
    u_grid: &[f64],
    n_samples: u64,
    seed: u64,
    jitter: f64,
) -> Result<LimitProcessSample, LimitProcessError> {
    validate_grid(u_grid)?;
    let n = u_grid.len();
    let base: Vec<f64> = u_grid
        .iter()
        .flat_map(|&ui| u_grid.iter().map(move |&uj| 1.0 / (ui + uj)))
        .collect();

    let mut factor = None;
    let mut used_jitter = jitter.max(0.0);
    let mut last_fail = (0usize, 0.0f64);
    loop {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += used_jitter;
        }
        match cholesky_in_place(&mut a, n) {
            Ok(()) => {
                factor = Some(a);
                break;
            }
            Err(fail) => {
                last_fail = fail;
                let next = if used_jitter == 0.0 { 1e-12 } else { used_jitter * 10.0 };
                if next > MAX_JITTER {
                    break;
                }
                used_jitter = next;
            }
        }
    }
    let l = factor.ok_or(LimitProcessError::FactorizationFailed {
        n,
        max_jitter: MAX_JITTER,
        pivot: last_fail.1,
        row: last_fail.0,
    })?;

    let values: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::new(seed, i);
            let z: Vec<f64> = (0..n as u64).map(|m| key.normal(m, NOISE_SALT)).collect();
            (0..n)
                .map(|r| (0..=r).map(|c| l[r * n + c] * z[c]).sum())
                .collect()
        })
        .collect();

    Ok(LimitProcessSample {
        u_grid: u_grid.to_vec(),
        values,
        method: SampleMethod::Cholesky,
        cov_error_bound: used_jitter * n as f64,
    })
}

impl LimitProcessSample {
    /// Empirical covariance matrix (row-major), means subtracted.
    pub fn empirical_covariance(&self) -> Vec<f64> {
        let n = self.u_grid.len();
        let len = self.values.len() as f64;
        let mut mean = vec![0.0f64; n];
        for row in &self.values {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= len;
        }
        let mut cov = vec![0.0f64; n * n];
        for row in &self.values {
            for i in 0..n {
                for j in 0..=i {
                    cov[i * n + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let v = cov[i * n + j] / (len - 1.0);
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }
        cov
    }
}
