//! Standardization and Euclidean combination shared by the conduit, load
//! and multilayer scores.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("cannot standardize a series of {0} values (need at least 2)")]
    TooShort(usize),
    #[error("cannot standardize a series with zero variance")]
    ZeroVariance,
    #[error("series contains a non-finite value")]
    NonFinite,
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Rescales `xs` to mean 1 and population standard deviation 1:
/// `y_i = (x_i - mean) / sigma + 1`.
pub fn standardize_series(xs: &[f64]) -> Result<Vec<f64>, ScoreError> {
    if xs.len() < 2 {
        return Err(ScoreError::TooShort(xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ScoreError::NonFinite);
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Err(ScoreError::ZeroVariance);
    }
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / n;
    let sigma = var.sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ScoreError::ZeroVariance);
    }
    Ok(xs.iter().map(|x| (x - mean) / sigma + 1.0).collect())
}

/// `sqrt(a^2 + b^2) / sqrt(2)`: equals 1 when both inputs are 1.
pub fn combine_euclidean(a: f64, b: f64) -> f64 {
    a.hypot(b) / std::f64::consts::SQRT_2
}
