// SPDX-License-Identifier: Apache-2.0

//! Control-system definitions: drift + control models, piecewise-constant
//! pulses, targets, and the operator bases used to select robustness classes.

mod basis;
mod fixtures;

pub use basis::{pauli_basis, pauli_basis_capped, symmetric_subspace_basis, OperatorBasis};
pub use fixtures::{fixture_targets, two_qubit_random_raw, ms_gate};

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::qcore::{
    ensure_hermitian, ensure_pure_state, ensure_unitary, ket_to_density, sigma_x,
    sigma_y, CMatrix, C64, ONE, ZERO,
};

/// One control channel of a [`ControlModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    /// Contributes `a · O` for segment value `a`.
    Amplitude { operator: CMatrix },
    /// Contributes `Ω (cos φ X + sin φ Y)` for segment value `φ`.
    Phase { x: CMatrix, y: CMatrix, amplitude: f64 },
}

impl Channel {
    pub fn is_phase(&self) -> bool {
        matches!(self, Channel::Phase { .. })
    }
}

/// Drift Hamiltonian plus a list of control channels; defines `H₀(t)` for
/// given segment values.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlModel {
    dim: usize,
    drift: CMatrix,
    channels: Vec<Channel>,
    label: String,
    rate: f64,
    clamp: Option<f64>,
}

impl ControlModel {
    /// Validates that all operators are Hermitian and `d × d`.
    pub fn new(label: impl Into<String>, drift: CMatrix, channels: Vec<Channel>) -> Result<Self> {
        ensure_hermitian(&drift, "drift")?;
        let dim = drift.nrows();
        for ch in &channels {
            match ch {
                Channel::Amplitude { operator } => {
                    check_dim(dim, operator.nrows())?;
                    ensure_hermitian(operator, "control operator")?;
                }
                Channel::Phase { x, y, amplitude } => {
                    check_dim(dim, x.nrows())?;
                    check_dim(dim, y.nrows())?;
                    ensure_hermitian(x, "phase-channel X")?;
                    ensure_hermitian(y, "phase-channel Y")?;
                    if !(amplitude.is_finite() && *amplitude > 0.0) {
                        return Err(Error::Config("phase amplitude must be positive".into()));
                    }
                }
            }
        }
        let rate = crate::qcore::HermitianEigen::new_unchecked(&drift)
            .values
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()));
        Ok(Self {
            dim,
            drift,
            channels,
            label: label.into(),
            rate: if rate > 0.0 { rate } else { 1.0 },
            clamp: None,
        })
    }

    /// Characteristic rate (Ω or β) used to scale random initial amplitudes.
    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    /// Soft symmetric clamp on amplitude channels: `a ↦ A tanh(a / A)`.
    pub fn with_clamp(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config("clamp bound must be positive".into()));
            }
        }
        self.clamp = bound;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn clamp(&self) -> Option<f64> {
        self.clamp
    }

    fn effective_amplitude(&self, a: f64) -> (f64, f64) {
        match self.clamp {
            Some(bound) => {
                let t = (a / bound).tanh();
                (bound * t, 1.0 - t * t)
            }
            None => (a, 1.0),
        }
    }

    /// Segment Hamiltonian for one row of channel values.
    pub fn hamiltonian(&self, values: &[f64]) -> CMatrix {
        let mut h = self.drift.clone();
        for (ch, &v) in self.channels.iter().zip(values) {
            match ch {
                Channel::Amplitude { operator } => {
                    let (a, _) = self.effective_amplitude(v);
                    h += operator * C64::from(a);
                }
                Channel::Phase { x, y, amplitude } => {
                    h += x * C64::from(amplitude * v.cos()) + y * C64::from(amplitude * v.sin());
                }
            }
        }
        h
    }

    /// `∂H/∂v_c` at the given segment values.
    pub fn hamiltonian_derivative(&self, values: &[f64], channel: usize) -> Result<CMatrix> {
        let ch = self.channels.get(channel).ok_or_else(|| {
            Error::Config(format!(
                "channel {channel} out of range ({} channels)",
                self.channels.len()
            ))
        })?;
        let v = values[channel];
        Ok(match ch {
            Channel::Amplitude { operator } => {
                let (_, slope) = self.effective_amplitude(v);
                operator * C64::from(slope)
            }
            Channel::Phase { x, y, amplitude } => {
                x * C64::from(-amplitude * v.sin()) + y * C64::from(amplitude * v.cos())
            }
        })
    }

    pub fn check_pulse(&self, pulse: &Pulse) -> Result<()> {
        if pulse.channels() != self.channels.len() {
            return Err(Error::Config(format!(
                "pulse has {} channels but model '{}' has {}",
                pulse.channels(),
                self.label,
                self.channels.len()
            )));
        }
        Ok(())
    }
}

/// Single qubit with fixed-amplitude phase control:
/// `H = Ω (cos φ σ_x + sin φ σ_y)`.
pub fn single_qubit_model(omega: f64) -> Result<ControlModel> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Config(format!("Ω must be positive, got {omega}")));
    }
    let model = ControlModel::new(
        "single_qubit",
        CMatrix::zeros(2, 2),
        vec![Channel::Phase {
            x: sigma_x(),
            y: sigma_y(),
            amplitude: omega,
        }],
    )?;
    Ok(model.with_rate(omega))
}

/// Spin matrices `(S_x, S_y, S_z)` for spin `S = n/2`, basis ordered
/// `m = S, S−1, …, −S`.
pub fn spin_matrices(n_qubits: usize) -> (CMatrix, CMatrix, CMatrix) {
    let d = n_qubits + 1;
    let s = n_qubits as f64 / 2.0;
    let m_of = |i: usize| s - i as f64;
    let mut raise = CMatrix::zeros(d, d);
    for i in 1..d {
        // ⟨m+1|S₊|m⟩ with m = m_of(i), landing on row i−1
        let m = m_of(i);
        raise[(i - 1, i)] = C64::from((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let lower = raise.adjoint();
    let sx = (&raise + &lower) * C64::from(0.5);
    let sy = (&raise - &lower) * C64::new(0.0, -0.5);
    let sz = CMatrix::from_diagonal(&DVector::from_fn(d, |i, _| C64::from(m_of(i))));
    (sx, sy, sz)
}

/// Collective-spin model in the symmetric subspace of `n` qubits:
/// `H = Ω_x S_x + Ω_y S_y + β S_z²`.
pub fn collective_spin_model(beta: f64, n_qubits: usize) -> Result<ControlModel> {
    if n_qubits < 2 {
        return Err(Error::Config(format!(
            "collective model needs at least 2 qubits, got {n_qubits}"
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("β must be positive, got {beta}")));
    }
    let (sx, sy, sz) = spin_matrices(n_qubits);
    let drift = (&sz * &sz) * C64::from(beta);
    let model = ControlModel::new(
        format!("collective_spin_{n_qubits}"),
        drift,
        vec![
            Channel::Amplitude { operator: sx },
            Channel::Amplitude { operator: sy },
        ],
    )?;
    Ok(model.with_rate(beta))
}

/// `S_z` eigenstate with eigenvalue `n/2 − m`, i.e. the basis vector `m`.
pub fn dicke_state(n_qubits: usize, m: usize) -> Result<DVector<C64>> {
    if m > n_qubits {
        return Err(Error::Input(format!(
            "excitation index {m} exceeds qubit count {n_qubits}"
        )));
    }
    let mut v = DVector::from_element(n_qubits + 1, ZERO);
    v[m] = ONE;
    Ok(v)
}

/// Piecewise-constant control table: `N_P` segments × channels, each
/// segment lasting `Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    values: Vec<f64>,
    channels: usize,
    dt: f64,
}

impl Pulse {
    /// `values` is row-major: segment `k`, channel `c` at `k * channels + c`.
    pub fn new(values: Vec<f64>, channels: usize, dt: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("pulse needs at least one channel".into()));
        }
        if values.is_empty() || values.len() % channels != 0 {
            return Err(Error::Config(format!(
                "{} values do not form rows of {channels} channels",
                values.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("segment duration must be positive, got {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("pulse contains non-finite values".into()));
        }
        Ok(Self {
            values,
            channels,
            dt,
        })
    }

    pub fn from_duration(values: Vec<f64>, channels: usize, duration: f64) -> Result<Self> {
        let n = if channels == 0 { 0 } else { values.len() / channels };
        if n == 0 {
            return Err(Error::Config("pulse needs at least one segment".into()));
        }
        Self::new(values, channels, duration / n as f64)
    }

    pub fn zeros(segments: usize, channels: usize, duration: f64) -> Result<Self> {
        Self::from_duration(vec![0.0; segments * channels], channels, duration)
    }

    pub fn segments(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t_f = N_P · Δt`.
    pub fn duration(&self) -> f64 {
        self.dt * self.segments() as f64
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    pub fn value(&self, k: usize, channel: usize) -> f64 {
        self.values[k * self.channels + channel]
    }

    pub fn params(&self) -> &[f64] {
        &self.values
    }

    pub fn n_params(&self) -> usize {
        self.values.len()
    }

    /// Same shape and timing, new parameter vector.
    pub fn with_params(&self, values: &[f64]) -> Result<Self> {
        check_dim(self.values.len(), values.len())?;
        Self::new(values.to_vec(), self.channels, self.dt)
    }
}

/// What the control should achieve.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Unitary(CMatrix),
    /// Pure initial state `σ` to pure target state `ρ_target`.
    State { initial: CMatrix, target: CMatrix },
}

impl TargetSpec {
    pub fn unitary(u: CMatrix) -> Result<Self> {
        ensure_unitary(&u, "target unitary")?;
        Ok(Self::Unitary(u))
    }

    pub fn state(initial: CMatrix, target: CMatrix) -> Result<Self> {
        check_dim(initial.nrows(), target.nrows())?;
        ensure_pure_state(&initial, "initial state")?;
        ensure_pure_state(&target, "target state")?;
        Ok(Self::State { initial, target })
    }

    pub fn state_from_kets(initial: &DVector<C64>, target: &DVector<C64>) -> Result<Self> {
        Self::state(ket_to_density(initial), ket_to_density(target))
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Unitary(u) => u.nrows(),
            TargetSpec::State { initial, .. } => initial.nrows(),
        }
    }

    pub fn initial_state(&self) -> Option<&CMatrix> {
        match self {
            TargetSpec::State { initial, .. } => Some(initial),
            TargetSpec::Unitary(_) => None,
        }
    }
}
