//! Stealthy false-data-injection attacks against the DC estimator.
//!
//! An attack `a = H c` moves the estimate by exactly `c` and leaves the
//! residual untouched, so no residual-based detector can see it.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::MeasurementVector;

/// Magnitude given to the unit direction found by
/// [`constrained_stealth_attack`] unless the caller asks for another.
pub const DEFAULT_CONSTRAINED_MAGNITUDE: f64 = 0.01;

/// Relative tolerance of [`verify_stealth`].
pub const STEALTH_TOL: f64 = 1e-9;

/// Shift `c` of the free DC state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateShift(pub DVector<f64>);

/// Measurement perturbation `a`, index-aligned with the meters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector(pub DVector<f64>);

/// `a = H c`.
pub fn craft_stealth_attack(h: &DMatrix<f64>, c: &StateShift) -> Result<AttackVector> {
    if c.0.len() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "state shift has {} entries, H has {} columns",
            c.0.len(),
            h.ncols()
        )));
    }
    Ok(AttackVector(h * &c.0))
}

/// Shift drawn uniformly on the sphere of radius `magnitude`.
pub fn random_stealth_attack(h: &DMatrix<f64>, magnitude: f64, seed: u64) -> Result<(StateShift, AttackVector)> {
    if magnitude <= 0.0 || !magnitude.is_finite() {
        return Err(Error::InvalidParameter(format!("magnitude must be positive, got {magnitude}")));
    }
    let k = h.ncols();
    if k == 0 {
        return Err(Error::DimensionMismatch("H has no state columns".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let direction = loop {
        let d = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = d.norm();
        if norm > 1e-12 {
            break d / norm;
        }
    };
    let c = StateShift(direction * magnitude);
    let a = craft_stealth_attack(h, &c)?;
    Ok((c, a))
}

fn check_meter_set(m: usize, set: &BTreeSet<usize>) -> Result<()> {
    match set.iter().find(|&&i| i >= m) {
        Some(i) => Err(Error::DimensionMismatch(format!("meter index {i} out of range for {m} meters"))),
        None => Ok(()),
    }
}

/// Stealth attack touching only `accessible` meters (0-based): `c` lies in
/// the null space of the rows of `H` the attacker cannot reach. Returns
/// `None` when that null space is trivial.
pub fn constrained_stealth_attack(
    h: &DMatrix<f64>,
    accessible: &BTreeSet<usize>,
    magnitude: f64,
) -> Result<Option<(StateShift, AttackVector)>> {
    check_meter_set(h.nrows(), accessible)?;
    if magnitude <= 0.0 || !magnitude.is_finite() {
        return Err(Error::InvalidParameter(format!("magnitude must be positive, got {magnitude}")));
    }
    let protected: Vec<usize> = (0..h.nrows()).filter(|i| !accessible.contains(i)).collect();
    let basis = linalg::null_space(&linalg::select_rows(h, &protected));
    if basis.ncols() == 0 {
        return Ok(None);
    }
    let mut direction = basis.column(0).into_owned();
    // sign convention: largest-magnitude component positive
    if direction[direction.iamax()] < 0.0 {
        direction.neg_mut();
    }
    let c = StateShift(direction * magnitude);
    let a = craft_stealth_attack(h, &c)?;
    Ok(Some((c, a)))
}

/// `z_a = z + a`.
pub fn apply_attack(z: &MeasurementVector, a: &AttackVector) -> Result<MeasurementVector> {
    if z.len() != a.0.len() {
        return Err(Error::LengthMismatch { expected: z.len(), actual: a.0.len() });
    }
    Ok(z + &a.0)
}

/// True iff `a` lies in the column space of `H`, up to
/// `STEALTH_TOL · max(1, ‖a‖)`.
pub fn verify_stealth(h: &DMatrix<f64>, a: &AttackVector) -> Result<bool> {
    if a.0.len() != h.nrows() {
        return Err(Error::DimensionMismatch(format!("attack has {} entries, H has {} rows", a.0.len(), h.nrows())));
    }
    Ok(linalg::column_space_residual(h, &a.0) <= STEALTH_TOL * a.0.norm().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtectionReport {
    pub protected: bool,
    /// Dimension of the stealth-attack directions the protected set cannot see.
    pub residual_attack_dim: usize,
}

/// A meter set (0-based) defeats every stealth attack iff its rows of `H`
/// have full column rank.
pub fn protection_check(h: &DMatrix<f64>, protected_meters: &BTreeSet<usize>) -> Result<ProtectionReport> {
    check_meter_set(h.nrows(), protected_meters)?;
    let rows: Vec<usize> = protected_meters.iter().copied().collect();
    let rank = linalg::numerical_rank(&linalg::select_rows(h, &rows));
    let residual_attack_dim = h.ncols() - rank;
    Ok(ProtectionReport { protected: residual_attack_dim == 0, residual_attack_dim })
}
