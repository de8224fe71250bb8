//! Weighted least-squares state estimation: closed form for the linear DC
//! model, Gauss-Newton for the AC model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, MeasurementConfig, NetworkModel};
use crate::linalg;
use crate::measurement::{self, MeasurementVector, Mode, StateVector};

/// Diagonal of `W = R⁻¹`, i.e. `w_i = σ_i⁻²`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    diagonal: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(diagonal: Vec<f64>) -> Result<Self> {
        if let Some(i) = diagonal.iter().position(|w| *w <= 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight {} must be positive and finite, got {}",
                i + 1,
                diagonal[i]
            )));
        }
        Ok(Self { diagonal })
    }

    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self> {
        Self::new(sigmas.iter().map(|s| 1.0 / (s * s)).collect())
    }

    pub fn from_config(config: &MeasurementConfig) -> Result<Self> {
        Self::from_sigmas(&config.sigmas())
    }

    pub fn identity(m: usize) -> Self {
        Self { diagonal: vec![1.0; m] }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    /// Meter variances `σ_i² = 1 / w_i`.
    pub fn variances(&self) -> Vec<f64> {
        self.diagonal.iter().map(|w| 1.0 / w).collect()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.diagonal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// Free state vector (see [`StateVector::from_free`]).
    pub state: DVector<f64>,
    pub residual: DVector<f64>,
    /// `‖r‖²`, in pu².
    pub squared_error_raw: f64,
    /// `Σ w_i r_i²`.
    pub objective_weighted: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl EstimationResult {
    fn from_residual(state: DVector<f64>, residual: DVector<f64>, w: &WeightMatrix) -> Self {
        let squared_error_raw = residual.norm_squared();
        let objective_weighted = residual.iter().zip(w.diagonal()).map(|(r, w)| w * r * r).sum();
        Self { state, residual, squared_error_raw, objective_weighted, converged: true, iterations: 1 }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// `Σ w_i (z_i − h_i)²`.
pub fn weighted_objective(z: &MeasurementVector, h_of_x: &MeasurementVector, w: &WeightMatrix) -> Result<f64> {
    check_len(z.len(), h_of_x.len())?;
    check_len(z.len(), w.len())?;
    Ok(z.iter().zip(h_of_x.iter()).zip(w.diagonal()).map(|((z, h), w)| w * (z - h) * (z - h)).sum())
}

/// `HᵀWH`.
pub fn gain_matrix(h: &DMatrix<f64>, w: &WeightMatrix) -> DMatrix<f64> {
    let mut weighted = h.clone();
    for (mut row, wi) in weighted.row_iter_mut().zip(w.diagonal()) {
        row *= *wi;
    }
    h.transpose() * weighted
}

/// Solves the normal equations `(HᵀWH) Δ = HᵀW y`.
fn normal_equations(h: &DMatrix<f64>, y: &DVector<f64>, w: &WeightMatrix) -> Result<DVector<f64>> {
    let chol = linalg::factor_gain(gain_matrix(h, w))?;
    let wy = y.component_mul(&w.as_vector());
    Ok(chol.solve(&(h.transpose() * wy)))
}

/// Closed-form WLS estimate `x' = (HᵀWH)⁻¹ HᵀW z`, via Cholesky.
pub fn estimate_dc(h: &DMatrix<f64>, z: &MeasurementVector, w: &WeightMatrix) -> Result<EstimationResult> {
    check_len(h.nrows(), z.len())?;
    check_len(h.nrows(), w.len())?;
    let x = normal_equations(h, z, w)?;
    let residual = z - h * &x;
    Ok(EstimationResult::from_residual(x, residual, w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcOptions {
    /// Starting point; flat start (`v = 1`, `δ = 0`) when `None`.
    pub init: Option<StateVector>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        Self { init: None, tol: 1e-8, max_iter: 50 }
    }
}

/// One Gauss-Newton correction at the free state `x`.
pub fn gauss_newton_step(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    z: &MeasurementVector,
    config: &MeasurementConfig,
    x: &DVector<f64>,
    w: &WeightMatrix,
) -> Result<DVector<f64>> {
    let state = StateVector::from_ac_free(network, x.as_slice())?;
    let hx = measurement::h_eval_ac(network, adm, &state, config)?;
    let jac = measurement::ac_jacobian(network, adm, &state, config)?;
    normal_equations(&jac.0, &(z - hx), w)
}

fn ac_result(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    z: &MeasurementVector,
    config: &MeasurementConfig,
    x: DVector<f64>,
    w: &WeightMatrix,
) -> Result<EstimationResult> {
    let state = StateVector::from_ac_free(network, x.as_slice())?;
    let hx = measurement::h_eval_ac(network, adm, &state, config)?;
    Ok(EstimationResult::from_residual(x, z - hx, w))
}

/// Gauss-Newton iteration on the AC measurement model. Stops once
/// `max |Δx| < tol`; otherwise fails with [`Error::DidNotConverge`] carrying
/// the iterate with the lowest weighted objective.
pub fn estimate_ac(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    z: &MeasurementVector,
    config: &MeasurementConfig,
    options: &AcOptions,
    w: &WeightMatrix,
) -> Result<EstimationResult> {
    check_len(config.len(), z.len())?;
    check_len(config.len(), w.len())?;
    let init = options.init.clone().unwrap_or_else(|| StateVector::flat_ac(network));
    let mut x = init.free(network, Mode::Ac)?;

    let mut best = ac_result(network, adm, z, config, x.clone(), w)?;
    best.iterations = 0;
    for iteration in 1..=options.max_iter {
        let dx = gauss_newton_step(network, adm, z, config, &x, w)?;
        x += &dx;
        let mut current = ac_result(network, adm, z, config, x.clone(), w)?;
        current.iterations = iteration;
        if dx.amax() < options.tol {
            return Ok(current);
        }
        if current.objective_weighted <= best.objective_weighted || !best.objective_weighted.is_finite() {
            best = current;
        }
    }
    best.converged = false;
    best.iterations = options.max_iter;
    Err(Error::DidNotConverge(Box::new(best)))
}
