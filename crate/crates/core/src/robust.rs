//! Tukey bisquare loss, weights and scale estimators used by the M, S and
//! MM pose refinements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tuning constant of the bisquare for M and MM weighting.
pub const C_M: f64 = 4.685;
/// Tuning constant of the bisquare for S estimation.
pub const C_S: f64 = 1.547;
/// Consistency factor turning the MAD into a Gaussian sigma.
pub const MAD_CONSISTENCY: f64 = 0.6745;
/// `E[rho(u)]` under the standard normal for `c = C_S`.
pub const S_SCALE_CONSTANT: f64 = 0.199;
/// Lower clamp on every scale estimate (pixels).
pub const SIGMA_FLOOR: f64 = 0.1;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RobustError {
    #[error("no residuals to estimate a scale from")]
    EmptyResiduals,
    #[error("weights and residuals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Plain least squares, every assignment weighted 1.
    Ls,
    M,
    S,
    Mm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Ls, EstimatorKind::M, EstimatorKind::S, EstimatorKind::Mm];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ls => "ls",
            EstimatorKind::M => "m",
            EstimatorKind::S => "s",
            EstimatorKind::Mm => "mm",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(EstimatorKind::Ls),
            "m" => Ok(EstimatorKind::M),
            "s" => Ok(EstimatorKind::S),
            "mm" => Ok(EstimatorKind::Mm),
            other => Err(format!("unknown estimator '{other}' (expected ls, m, s or mm)")),
        }
    }
}

/// Tukey bisquare loss: `u^2/2 - u^4/(2c^2) + u^6/(6c^4)` inside `|u| <= c`,
/// `c^2/6` outside.
pub fn tukey_rho(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        let u2 = u * u;
        let c2 = c * c;
        u2 / 2.0 - u2 * u2 / (2.0 * c2) + u2 * u2 * u2 / (6.0 * c2 * c2)
    } else {
        c * c / 6.0
    }
}

/// Influence function `rho'(u) = u (1 - (u/c)^2)^2`, zero outside `c`.
pub fn tukey_psi(u: f64, c: f64) -> f64 {
    u * tukey_weight(u, c)
}

/// Bisquare weight `(1 - (u/c)^2)^2`, zero outside `c`.
pub fn tukey_weight(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        let r = u / c;
        let t = 1.0 - r * r;
        t * t
    } else {
        0.0
    }
}

/// S-estimation weight `rho(u) / u^2`, with the removable singularity at
/// zero filled by its limit 1/2.
pub fn s_weight(u: f64, c: f64) -> f64 {
    if u.abs() < 1e-8 {
        return 0.5;
    }
    tukey_rho(u, c) / (u * u)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `median(|d - median(d)|) / 0.6745`, clamped to [`SIGMA_FLOOR`].
pub fn mad_scale(residuals: &[f64]) -> Result<f64, RobustError> {
    if residuals.is_empty() {
        return Err(RobustError::EmptyResiduals);
    }
    let mut buf = residuals.to_vec();
    let med = median(&mut buf);
    for (b, r) in buf.iter_mut().zip(residuals) {
        *b = (r - med).abs();
    }
    let mad = median(&mut buf);
    Ok((mad / MAD_CONSISTENCY).max(SIGMA_FLOOR))
}

/// S-scale update `sqrt(sum(w d^2) / (0.199 m n))`, clamped to
/// [`SIGMA_FLOOR`]. `m n` is the number of active terms.
pub fn s_scale_update(weights: &[f64], residuals: &[f64], m: usize, n: usize) -> Result<f64, RobustError> {
    if weights.len() != residuals.len() {
        return Err(RobustError::LengthMismatch(weights.len(), residuals.len()));
    }
    if residuals.is_empty() || m * n == 0 {
        return Err(RobustError::EmptyResiduals);
    }
    let sum: f64 = weights.iter().zip(residuals).map(|(w, d)| w * d * d).sum();
    Ok((sum / (S_SCALE_CONSTANT * (m * n) as f64)).sqrt().max(SIGMA_FLOOR))
}
