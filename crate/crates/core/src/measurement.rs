//! Measurement functions `h(x)` for the AC and DC models, their Jacobians,
//! and synthetic meter readings.
//!
//! Free-state ordering follows the bus ordering in [`NetworkModel`]: angles of
//! the non-reference buses ascending by id, then (AC only) magnitudes of all
//! buses ascending by id.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, Location, MeasurementConfig, MeasurementKind, NetworkModel};

/// Meter readings, index-aligned with [`MeasurementConfig::specs`].
pub type MeasurementVector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Dc,
    Ac,
}

/// Bus angles and (AC only) magnitudes, both indexed by `id - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub angles: Vec<f64>,
    pub magnitudes: Option<Vec<f64>>,
}

impl StateVector {
    pub fn flat_dc(network: &NetworkModel) -> Self {
        Self { angles: vec![0.0; network.n_buses()], magnitudes: None }
    }

    pub fn flat_ac(network: &NetworkModel) -> Self {
        Self { angles: vec![0.0; network.n_buses()], magnitudes: Some(vec![1.0; network.n_buses()]) }
    }

    pub fn from_dc_free(network: &NetworkModel, free: &[f64]) -> Result<Self> {
        let k = network.dc_state_dim();
        if free.len() != k {
            return Err(Error::LengthMismatch { expected: k, actual: free.len() });
        }
        let mut angles = vec![0.0; network.n_buses()];
        for (col, id) in network.free_angle_buses().into_iter().enumerate() {
            angles[id - 1] = free[col];
        }
        Ok(Self { angles, magnitudes: None })
    }

    pub fn from_ac_free(network: &NetworkModel, free: &[f64]) -> Result<Self> {
        let k = network.ac_state_dim();
        if free.len() != k {
            return Err(Error::LengthMismatch { expected: k, actual: free.len() });
        }
        let na = network.dc_state_dim();
        let mut state = Self::from_dc_free(network, &free[..na])?;
        state.magnitudes = Some(free[na..].to_vec());
        Ok(state)
    }

    pub fn dc_free(&self, network: &NetworkModel) -> DVector<f64> {
        DVector::from_iterator(
            network.dc_state_dim(),
            network.free_angle_buses().into_iter().map(|id| self.angles[id - 1]),
        )
    }

    pub fn ac_free(&self, network: &NetworkModel) -> Result<DVector<f64>> {
        let mags = self.magnitudes.as_ref().ok_or(Error::MissingMagnitudes)?;
        Ok(DVector::from_iterator(
            network.ac_state_dim(),
            self.dc_free(network).iter().copied().chain(mags.iter().copied()),
        ))
    }

    pub fn free(&self, network: &NetworkModel, mode: Mode) -> Result<DVector<f64>> {
        match mode {
            Mode::Dc => Ok(self.dc_free(network)),
            Mode::Ac => self.ac_free(network),
        }
    }

    pub fn from_free(network: &NetworkModel, free: &[f64], mode: Mode) -> Result<Self> {
        match mode {
            Mode::Dc => Self::from_dc_free(network, free),
            Mode::Ac => Self::from_ac_free(network, free),
        }
    }

    fn check_shape(&self, network: &NetworkModel) -> Result<()> {
        let n = network.n_buses();
        if self.angles.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: self.angles.len() });
        }
        if let Some(m) = &self.magnitudes {
            if m.len() != n {
                return Err(Error::LengthMismatch { expected: n, actual: m.len() });
            }
        }
        Ok(())
    }
}

/// `m x k` Jacobian; rows follow meter order, columns the free-state order.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix(pub DMatrix<f64>);

impl Deref for JacobianMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<DMatrix<f64>> for JacobianMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

/// Constant DC Jacobian. A `flow_p` meter on `i -> j` gets `+1/X` at
/// `θ_i` and `-1/X` at `θ_j`; an `injection_p` meter sums the flows leaving
/// its bus. Reference-bus columns are dropped.
pub fn dc_jacobian(network: &NetworkModel, config: &MeasurementConfig) -> Result<JacobianMatrix> {
    let k = network.dc_state_dim();
    let mut h = DMatrix::zeros(config.len(), k);
    let mut add_flow = |row: usize, from: usize, to: usize, x: f64| {
        let s = 1.0 / x;
        if let Some(c) = network.angle_column(from) {
            h[(row, c)] += s;
        }
        if let Some(c) = network.angle_column(to) {
            h[(row, c)] -= s;
        }
    };
    for (row, spec) in config.specs.iter().enumerate() {
        match (spec.kind, spec.location) {
            (MeasurementKind::FlowP, Location::Branch { from, to }) => {
                for (br, _) in network.branches_between(from, to) {
                    add_flow(row, from, to, br.reactance);
                }
            }
            (MeasurementKind::InjectionP, Location::Bus(bus)) => {
                for br in &network.branches {
                    if br.from_bus == bus {
                        add_flow(row, bus, br.to_bus, br.reactance);
                    } else if br.to_bus == bus {
                        add_flow(row, bus, br.from_bus, br.reactance);
                    }
                }
            }
            (kind, _) => return Err(Error::UnsupportedKindForDC { index: row, kind: kind.as_str() }),
        }
    }
    Ok(JacobianMatrix(h))
}

/// `H θ` for the free angles of `state`.
pub fn h_eval_dc(network: &NetworkModel, state: &StateVector, config: &MeasurementConfig) -> Result<MeasurementVector> {
    state.check_shape(network)?;
    let h = dc_jacobian(network, config)?;
    Ok(&h.0 * state.dc_free(network))
}

/// Power flow on every branch `from -> to`, summed over parallel branches,
/// with partials. `d` entries are `(∂/∂δ_from, ∂/∂δ_to, ∂/∂v_from, ∂/∂v_to)`.
struct FlowTerms {
    p: f64,
    q: f64,
    dp: [f64; 4],
    dq: [f64; 4],
}

fn flow_terms(network: &NetworkModel, state: &StateVector, mags: &[f64], from: usize, to: usize) -> FlowTerms {
    let (vi, vj) = (mags[from - 1], mags[to - 1]);
    let d = state.angles[from - 1] - state.angles[to - 1];
    let (sin, cos) = d.sin_cos();
    let mut t = FlowTerms { p: 0.0, q: 0.0, dp: [0.0; 4], dq: [0.0; 4] };
    for (br, _) in network.branches_between(from, to) {
        let y = br.series_admittance();
        let (g, b) = (y.re, y.im);
        let (gs, bs) = (br.shunt_conductance, br.shunt_susceptance);
        let a = g * cos + b * sin;
        let c = g * sin - b * cos;
        t.p += vi * vi * (gs + g) - vi * vj * a;
        t.q += -vi * vi * (bs + b) - vi * vj * c;

        t.dp[0] += vi * vj * c;
        t.dp[1] -= vi * vj * c;
        t.dp[2] += 2.0 * vi * (gs + g) - vj * a;
        t.dp[3] -= vi * a;

        t.dq[0] -= vi * vj * a;
        t.dq[1] += vi * vj * a;
        t.dq[2] += -2.0 * vi * (bs + b) - vj * c;
        t.dq[3] -= vi * c;
    }
    t
}

/// Injection at `bus` with partials as `(bus id, ∂/∂δ, ∂/∂v)` triples.
fn injection_terms(
    adm: &AdmittanceMatrix,
    state: &StateVector,
    mags: &[f64],
    bus: usize,
    reactive: bool,
) -> (f64, Vec<(usize, f64, f64)>) {
    let i = bus;
    let vi = mags[i - 1];
    let (gii, bii) = (adm.g(i, i), adm.b(i, i));
    let mut value = if reactive { -vi * vi * bii } else { vi * vi * gii };
    let mut d_self_angle = 0.0;
    let mut d_self_mag = if reactive { -2.0 * vi * bii } else { 2.0 * vi * gii };
    let mut partials = Vec::with_capacity(adm.neighbors[i - 1].len() + 1);
    for &j in &adm.neighbors[i - 1] {
        let vj = mags[j - 1];
        let (gij, bij) = (adm.g(i, j), adm.b(i, j));
        let (sin, cos) = (state.angles[i - 1] - state.angles[j - 1]).sin_cos();
        let a = gij * cos + bij * sin;
        let c = gij * sin - bij * cos;
        if reactive {
            value += vi * vj * c;
            d_self_angle += vi * vj * a;
            d_self_mag += vj * c;
            partials.push((j, -vi * vj * a, vi * c));
        } else {
            value += vi * vj * a;
            d_self_angle -= vi * vj * c;
            d_self_mag += vj * a;
            partials.push((j, vi * vj * c, vi * a));
        }
    }
    partials.push((i, d_self_angle, d_self_mag));
    (value, partials)
}

fn magnitudes(state: &StateVector, network: &NetworkModel) -> Result<Vec<f64>> {
    state.check_shape(network)?;
    state.magnitudes.clone().ok_or(Error::MissingMagnitudes)
}

/// Nonlinear measurement functions of the π-model network.
pub fn h_eval_ac(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    state: &StateVector,
    config: &MeasurementConfig,
) -> Result<MeasurementVector> {
    Ok(ac_evaluate(network, adm, state, config, false)?.0)
}

/// Analytic `∂h/∂x` of [`h_eval_ac`] at `state`.
pub fn ac_jacobian(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    state: &StateVector,
    config: &MeasurementConfig,
) -> Result<JacobianMatrix> {
    Ok(JacobianMatrix(ac_evaluate(network, adm, state, config, true)?.1))
}

fn ac_evaluate(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    state: &StateVector,
    config: &MeasurementConfig,
    with_jacobian: bool,
) -> Result<(MeasurementVector, DMatrix<f64>)> {
    let mags = magnitudes(state, network)?;
    let m = config.len();
    let na = network.dc_state_dim();
    let mut z = DVector::zeros(m);
    let mut jac = DMatrix::zeros(if with_jacobian { m } else { 0 }, network.ac_state_dim());

    let put = |jac: &mut DMatrix<f64>, row: usize, bus: usize, d_angle: f64, d_mag: f64| {
        if !with_jacobian {
            return;
        }
        if let Some(c) = network.angle_column(bus) {
            jac[(row, c)] += d_angle;
        }
        jac[(row, na + bus - 1)] += d_mag;
    };

    for (row, spec) in config.specs.iter().enumerate() {
        match (spec.kind, spec.location) {
            (MeasurementKind::VoltageMagnitude, Location::Bus(bus)) => {
                z[row] = mags[bus - 1];
                put(&mut jac, row, bus, 0.0, 1.0);
            }
            (MeasurementKind::InjectionP | MeasurementKind::InjectionQ, Location::Bus(bus)) => {
                let reactive = spec.kind == MeasurementKind::InjectionQ;
                let (value, partials) = injection_terms(adm, state, &mags, bus, reactive);
                z[row] = value;
                for (j, da, dv) in partials {
                    put(&mut jac, row, j, da, dv);
                }
            }
            (kind, Location::Branch { from, to }) => {
                let t = flow_terms(network, state, &mags, from, to);
                let (value, d) = match kind {
                    MeasurementKind::FlowP => (t.p, t.dp),
                    MeasurementKind::FlowQ => (t.q, t.dq),
                    _ => {
                        // I = sqrt(P^2 + Q^2) / v_from
                        let vi = mags[from - 1];
                        let s = t.p.hypot(t.q);
                        let mut d = [0.0; 4];
                        if s > 0.0 {
                            for ((dk, dp), dq) in d.iter_mut().zip(t.dp).zip(t.dq) {
                                *dk = (t.p * dp + t.q * dq) / (s * vi);
                            }
                        }
                        d[2] -= s / (vi * vi);
                        (s / vi, d)
                    }
                };
                z[row] = value;
                put(&mut jac, row, from, d[0], d[2]);
                put(&mut jac, row, to, d[1], d[3]);
            }
            (kind, Location::Bus(_)) => {
                unreachable!("validated config never puts {kind} on a bus")
            }
        }
    }
    Ok((z, jac))
}

/// Noise policy for [`simulate_measurements`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    /// Independent `N(0, σ_i^2)` per meter; meter `i` draws from its own
    /// stream of the generator seeded with `seed`.
    Gaussian {
        seed: u64,
    },
}

/// Standard normal draw for meter `index` under `seed`. Adding meters never
/// changes the draws of existing ones.
pub fn meter_noise(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    StandardNormal.sample(&mut rng)
}

/// `z = h(x) + e`.
pub fn simulate_measurements(
    network: &NetworkModel,
    adm: &AdmittanceMatrix,
    true_state: &StateVector,
    config: &MeasurementConfig,
    mode: Mode,
    noise: Noise,
) -> Result<MeasurementVector> {
    let mut z = match mode {
        Mode::Dc => h_eval_dc(network, true_state, config)?,
        Mode::Ac => h_eval_ac(network, adm, true_state, config)?,
    };
    if let Noise::Gaussian { seed } = noise {
        for (i, spec) in config.specs.iter().enumerate() {
            z[i] += spec.sigma * meter_noise(seed, i);
        }
    }
    Ok(z)
}
