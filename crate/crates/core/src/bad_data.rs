//! Residual-based bad-data detection: residual norm threshold, chi-square
//! test on the weighted objective, and largest normalized residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::{self, EstimationResult, WeightMatrix};
use crate::linalg;
use crate::measurement::MeasurementVector;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_LNR_THRESHOLD: f64 = 3.0;

/// Normalized residuals closer than this to the maximum count as tied.
pub const LNR_TIE_TOL: f64 = 1e-9;

/// A meter whose residual sensitivity `S_ii = Ω_ii / R_ii` is at or below
/// this is critical: its residual is structurally zero.
pub const CRITICAL_SENSITIVITY: f64 = 1e-10;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_lnr_threshold() -> f64 {
    DEFAULT_LNR_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorConfig {
    NormThreshold {
        tau: f64,
    },
    ChiSquare {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Lnr {
        #[serde(default = "default_lnr_threshold")]
        lnr_threshold: f64,
    },
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::ChiSquare { alpha: DEFAULT_ALPHA }
    }
}

impl DetectorConfig {
    pub fn method(&self) -> &'static str {
        match self {
            DetectorConfig::NormThreshold { .. } => "norm_threshold",
            DetectorConfig::ChiSquare { .. } => "chi_square",
            DetectorConfig::Lnr { .. } => "lnr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub method: &'static str,
    pub detected: bool,
    pub statistic: f64,
    pub threshold_used: f64,
    /// 0-based index of the meter with the largest normalized residual (LNR only).
    pub suspect_meter: Option<usize>,
    pub ambiguous: bool,
    /// 0-based indices of critical meters excluded from the LNR ranking.
    pub critical_meters: Vec<usize>,
}

impl DetectionResult {
    fn simple(method: &'static str, statistic: f64, threshold: f64) -> Self {
        Self {
            method,
            detected: statistic > threshold,
            statistic,
            threshold_used: threshold,
            suspect_meter: None,
            ambiguous: false,
            critical_meters: Vec::new(),
        }
    }
}

/// `r = z − h(x')`.
pub fn residual(z: &MeasurementVector, h_of_x: &MeasurementVector) -> Result<DVector<f64>> {
    if z.len() != h_of_x.len() {
        return Err(Error::LengthMismatch { expected: z.len(), actual: h_of_x.len() });
    }
    Ok(z - h_of_x)
}

/// Flags bad data when `‖r‖₂ > τ`.
pub fn norm_threshold_test(r: &DVector<f64>, tau: f64) -> Result<DetectionResult> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(DetectionResult::simple("norm_threshold", r.norm(), tau))
}

/// Upper `alpha` quantile of the chi-square distribution with `dof` degrees
/// of freedom.
pub fn chi_square_threshold(dof: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let dist =
        ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(format!("chi-square with {dof} dof: {e}")))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

/// Chi-square test of the weighted objective with `m − state_dim` degrees
/// of freedom.
pub fn chi_square_test(
    z: &MeasurementVector,
    h_of_x: &MeasurementVector,
    w: &WeightMatrix,
    state_dim: usize,
    alpha: f64,
) -> Result<DetectionResult> {
    let m = z.len();
    if m <= state_dim {
        return Err(Error::NoRedundancy { meters: m, states: state_dim });
    }
    let statistic = estimator::weighted_objective(z, h_of_x, w)?;
    let threshold = chi_square_threshold(m - state_dim, alpha)?;
    Ok(DetectionResult::simple("chi_square", statistic, threshold))
}

/// Diagonal of the residual covariance `Ω = S R = R − H (HᵀWH)⁻¹ Hᵀ`.
pub fn residual_covariance_diagonal(h: &DMatrix<f64>, w: &WeightMatrix) -> Result<DVector<f64>> {
    if h.nrows() != w.len() {
        return Err(Error::LengthMismatch { expected: h.nrows(), actual: w.len() });
    }
    let chol = linalg::factor_gain(estimator::gain_matrix(h, w))?;
    let g_inv_ht = chol.solve(&h.transpose());
    let variances = w.variances();
    Ok(DVector::from_fn(h.nrows(), |i, _| variances[i] - h.row(i).dot(&g_inv_ht.column(i).transpose())))
}

/// Largest normalized residual `|r_i| / √Ω_ii` over non-critical meters.
pub fn largest_normalized_residual(
    h: &DMatrix<f64>,
    w: &WeightMatrix,
    estimate: &EstimationResult,
    lnr_threshold: f64,
) -> Result<DetectionResult> {
    let (m, k) = (h.nrows(), h.ncols());
    if m <= k {
        return Err(Error::NoRedundancy { meters: m, states: k });
    }
    if estimate.residual.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: estimate.residual.len() });
    }
    let omega = residual_covariance_diagonal(h, w)?;
    let variances = w.variances();

    let mut critical = Vec::new();
    let mut normalized = Vec::with_capacity(m);
    for i in 0..m {
        if omega[i] / variances[i] <= CRITICAL_SENSITIVITY {
            critical.push(i);
        } else {
            normalized.push((i, estimate.residual[i].abs() / omega[i].sqrt()));
        }
    }
    let Some(&(suspect, max)) = normalized.iter().fold(None, |best: Option<&(usize, f64)>, cur| match best {
        Some(b) if b.1 >= cur.1 => Some(b),
        _ => Some(cur),
    }) else {
        return Err(Error::NumericallySingularOmega(critical));
    };
    // lowest index among the tied maxima
    let ties: Vec<usize> = normalized.iter().filter(|(_, v)| max - v <= LNR_TIE_TOL).map(|(i, _)| *i).collect();
    let suspect = ties.first().copied().unwrap_or(suspect);

    Ok(DetectionResult {
        method: "lnr",
        detected: max > lnr_threshold,
        statistic: max,
        threshold_used: lnr_threshold,
        suspect_meter: Some(suspect),
        ambiguous: ties.len() > 1,
        critical_meters: critical,
    })
}

/// Runs `config` against an estimate of `z`. `h` is the measurement Jacobian
/// at the estimate (constant for the DC model).
pub fn run_detector(
    config: &DetectorConfig,
    h: &DMatrix<f64>,
    z: &MeasurementVector,
    w: &WeightMatrix,
    estimate: &EstimationResult,
) -> Result<DetectionResult> {
    match *config {
        DetectorConfig::NormThreshold { tau } => norm_threshold_test(&estimate.residual, tau),
        DetectorConfig::ChiSquare { alpha } => {
            let h_of_x = z - &estimate.residual;
            chi_square_test(z, &h_of_x, w, h.ncols(), alpha)
        }
        DetectorConfig::Lnr { lnr_threshold } => largest_normalized_residual(h, w, estimate, lnr_threshold),
    }
}
