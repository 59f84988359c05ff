// SPDX-License-Identifier: Apache-2.0

//! Doubled-space objects: the time-averaging superoperator `M₀`, the
//! projectors that select which perturbations matter, and the second-order
//! noise kernel.
//!
//! Inside a constant segment the conjugation lift evolves as
//! `L(e^{−iHτ}) = exp(iτĤ)` with `Ĥ = H ⊗ I − I ⊗ Hᵀ`, whose spectrum is
//! `{e_a − e_b}` with eigenvectors `Q ⊗ Q*`. Every segment superoperator is
//! therefore a scalar function of `Ĥ`, fixed by the [`Quadrature`].

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::models::{ControlModel, OperatorBasis, Pulse};
use crate::qcore::{
    conjugation_lift, ensure_hermitian, ensure_pure_state, frobenius_sq, identity, max_abs,
    propagate_segments, vectorize, CMatrix, Propagation, C64, ONE, ZERO,
};

/// Below this frequency `∫₀^Δt e^{iωτ}dτ` is taken as `Δt`.
const DEGENERATE_OMEGA: f64 = 1e-12;
/// Below this phase spread divided differences use Gauss–Legendre on `f'`.
const DIVIDED_DIFFERENCE_SWITCH: f64 = 0.5;

/// Time discretization of the interaction-picture average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Closed-form integral over each constant segment.
    Exact,
    /// Left-endpoint rule with `substeps` points per segment.
    LeftRiemann { substeps: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Exact
    }
}

// 4-point Gauss–Legendre on [0, 1].
const GL_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        match self {
            Quadrature::LeftRiemann { substeps: 0 } => {
                Err(Error::Config("substeps must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// `f(ω)` such that the segment superoperator is `f(Ĥ)`.
    pub(crate) fn kernel(&self, omega: f64, dt: f64) -> C64 {
        match *self {
            Quadrature::Exact => {
                if omega.abs() < DEGENERATE_OMEGA {
                    return C64::from(dt);
                }
                let half = 0.5 * omega * dt;
                C64::from_polar(dt * half.sin() / half, half)
            }
            Quadrature::LeftRiemann { substeps } => {
                let delta = dt / substeps as f64;
                (0..substeps)
                    .map(|l| C64::from_polar(delta, omega * l as f64 * delta))
                    .sum()
            }
        }
    }

    /// `f'(ω)`.
    pub(crate) fn kernel_derivative(&self, omega: f64, dt: f64) -> C64 {
        match *self {
            Quadrature::Exact => {
                // iΔt² ∫₀¹ u e^{iθu} du
                let theta = omega * dt;
                let phi = if theta.abs() < 0.1 {
                    let mut term = ONE;
                    let mut acc = ZERO;
                    for n in 0..12 {
                        acc += term / C64::from((n + 2) as f64);
                        term *= C64::new(0.0, theta) / C64::from((n + 1) as f64);
                    }
                    acc
                } else {
                    let e = C64::from_polar(1.0, theta);
                    (e * C64::new(1.0, -theta) - ONE) / C64::from(theta * theta)
                };
                C64::new(0.0, dt * dt) * phi
            }
            Quadrature::LeftRiemann { substeps } => {
                let delta = dt / substeps as f64;
                (0..substeps)
                    .map(|l| {
                        let t = l as f64 * delta;
                        C64::new(0.0, delta * t) * C64::from_polar(1.0, omega * t)
                    })
                    .sum()
            }
        }
    }

    /// Divided difference `f[x, y]`, with `f[x, x] = f'(x)`.
    pub(crate) fn divided_difference(&self, x: f64, y: f64, dt: f64) -> C64 {
        let h = x - y;
        if (h * dt).abs() < DIVIDED_DIFFERENCE_SWITCH {
            GL_NODES
                .iter()
                .zip(GL_WEIGHTS)
                .map(|(s, w)| self.kernel_derivative(y + s * h, dt) * w)
                .sum()
        } else {
            (self.kernel(x, dt) - self.kernel(y, dt)) / C64::from(h)
        }
    }
}

/// What a [`Superoperator`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperKind {
    M0,
    Mtilde,
    Projector,
    State,
    Kernel,
}

/// Dense `d² × d²` matrix acting on row-vectorized operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: CMatrix,
    pub kind: SuperKind,
}

impl Superoperator {
    pub fn new(matrix: CMatrix, kind: SuperKind) -> Self {
        Self { matrix, kind }
    }

    /// Operator dimension `d`.
    pub fn dim(&self) -> usize {
        (self.matrix.nrows() as f64).sqrt().round() as usize
    }

    pub fn frobenius_sq(&self) -> f64 {
        frobenius_sq(&self.matrix)
    }

    /// Applies the superoperator to an operator `A`.
    pub fn apply(&self, a: &CMatrix) -> Result<CMatrix> {
        check_dim(self.dim(), a.nrows())?;
        crate::qcore::devectorize(&(&self.matrix * vectorize(a)))
    }
}

/// Per-segment data of one superoperator pass.
#[derive(Debug, Clone)]
pub(crate) struct LiftedSegment {
    /// `Q ⊗ Q*`, eigenvectors of `Ĥ`.
    pub basis: CMatrix,
    /// `e_a − e_b` at index `a·d + b`.
    pub omegas: Vec<f64>,
    /// `f(Ĥ)`.
    pub superop: CMatrix,
}

/// Everything one evaluation of `M₀` produces, kept for gradients.
#[derive(Debug, Clone)]
pub(crate) struct M0Pass {
    pub quadrature: Quadrature,
    pub segments: Vec<LiftedSegment>,
    /// `L(W_j)` for `j = 0..=N`.
    pub prefix_lifts: Vec<CMatrix>,
    pub m0: CMatrix,
}

fn spectral_lift(eigvecs: &CMatrix) -> CMatrix {
    eigvecs.kronecker(&eigvecs.map(|z| z.conj()))
}

pub(crate) fn lift_segment(
    eigen: &crate::qcore::HermitianEigen,
    dt: f64,
    quadrature: Quadrature,
) -> LiftedSegment {
    let d = eigen.dim();
    let basis = spectral_lift(&eigen.vectors);
    let mut omegas = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            omegas.push(eigen.values[a] - eigen.values[b]);
        }
    }
    let mut scaled = basis.clone();
    for (col, &w) in omegas.iter().enumerate() {
        let f = quadrature.kernel(w, dt);
        for z in scaled.column_mut(col).iter_mut() {
            *z *= f;
        }
    }
    let superop = scaled * basis.adjoint();
    LiftedSegment {
        basis,
        omegas,
        superop,
    }
}

pub(crate) fn m0_pass_from(propagation: &Propagation, quadrature: Quadrature) -> M0Pass {
    let dt = propagation.dt;
    let tf = propagation.duration();
    let d = propagation.cumulative[0].nrows();
    let segments: Vec<LiftedSegment> = propagation
        .segments
        .iter()
        .map(|s| lift_segment(&s.eigen, dt, quadrature))
        .collect();
    let prefix_lifts: Vec<CMatrix> = propagation.cumulative.iter().map(conjugation_lift).collect();
    let mut m0 = CMatrix::zeros(d * d, d * d);
    for (j, seg) in segments.iter().enumerate() {
        m0 += &prefix_lifts[j] * &seg.superop;
    }
    m0 /= C64::from(tf);
    M0Pass {
        quadrature,
        segments,
        prefix_lifts,
        m0,
    }
}

pub(crate) fn m0_pass(model: &ControlModel, pulse: &Pulse, quadrature: Quadrature) -> Result<M0Pass> {
    quadrature.validate()?;
    let propagation = propagate_segments(model, pulse)?;
    Ok(m0_pass_from(&propagation, quadrature))
}

/// `M₀ = (1/t_f) ∫₀^{t_f} L(U₀(s, 0)) ds`, so that `|V̄₀⟩⟩ = M₀|V⟩⟩`.
pub fn build_m0(model: &ControlModel, pulse: &Pulse, quadrature: Quadrature) -> Result<Superoperator> {
    Ok(Superoperator::new(m0_pass(model, pulse, quadrature)?.m0, SuperKind::M0))
}

/// `V̄₀ = (1/t_f) ∫₀^{t_f} U₀†(s,0) V U₀(s,0) ds`, computed in operator space
/// without forming any superoperator.
pub fn time_average_v(
    model: &ControlModel,
    pulse: &Pulse,
    v: &CMatrix,
    quadrature: Quadrature,
) -> Result<CMatrix> {
    quadrature.validate()?;
    check_dim(model.dim(), v.nrows())?;
    ensure_hermitian(v, "perturbation V")?;
    let prop = propagate_segments(model, pulse)?;
    Ok(time_average_from(&prop, v, quadrature))
}

pub(crate) fn time_average_from(prop: &Propagation, v: &CMatrix, quadrature: Quadrature) -> CMatrix {
    let d = v.nrows();
    let dt = prop.dt;
    let mut acc = CMatrix::zeros(d, d);
    for (j, seg) in prop.segments.iter().enumerate() {
        let w = &prop.cumulative[j];
        let q = &seg.eigen.vectors;
        let e = &seg.eigen.values;
        let mut inner = q.adjoint() * v * q;
        for a in 0..d {
            for b in 0..d {
                inner[(a, b)] *= quadrature.kernel(e[a] - e[b], dt);
            }
        }
        acc += w.adjoint() * (q * inner * q.adjoint()) * w;
    }
    let avg = acc / C64::from(prop.duration());
    // exact Hermitian symmetrization of roundoff
    (&avg + avg.adjoint()) * C64::from(0.5)
}

/// `P₀ = |I⟩⟩⟨⟨I| / d`.
pub fn projector_identity(d: usize) -> Result<Superoperator> {
    if d < 2 {
        return Err(Error::Config(format!("projector needs d ≥ 2, got {d}")));
    }
    let v = vectorize(&identity(d));
    Ok(Superoperator::new(
        &v * v.adjoint() / C64::from(d as f64),
        SuperKind::Projector,
    ))
}

/// `Σ_{class(j) ∈ classes} |Λ_j⟩⟩⟨⟨Λ_j|`.
pub fn projector_subset(basis: &OperatorBasis, classes: &BTreeSet<usize>) -> Result<Superoperator> {
    let labels = basis.labels();
    if let Some(bad) = classes.iter().find(|c| !labels.contains(c)) {
        return Err(Error::Config(format!(
            "class {bad} not present in basis (labels {labels:?})"
        )));
    }
    let d2 = basis.dim() * basis.dim();
    let mut p = CMatrix::zeros(d2, d2);
    for e in basis.members(classes) {
        let v = vectorize(e);
        p += &v * v.adjoint();
    }
    Ok(Superoperator::new(p, SuperKind::Projector))
}

/// `I − Σ_{k∈η} P_k`; `η` must contain the identity class.
pub fn robustness_projector(basis: &OperatorBasis, excluded: &BTreeSet<usize>) -> Result<CMatrix> {
    if !excluded.contains(&0) {
        return Err(Error::Config(
            "excluded classes must contain the identity class 0".into(),
        ));
    }
    let p = projector_subset(basis, excluded)?;
    let d2 = basis.dim() * basis.dim();
    Ok(CMatrix::identity(d2, d2) - p.matrix)
}

/// `M̃₀ = M₀ (I − Σ_{k∈η} P_k)`.
pub fn build_mtilde(
    m0: &Superoperator,
    basis: &OperatorBasis,
    excluded: &BTreeSet<usize>,
) -> Result<Superoperator> {
    check_dim(m0.dim(), basis.dim())?;
    let q = robustness_projector(basis, excluded)?;
    Ok(Superoperator::new(&m0.matrix * q, SuperKind::Mtilde))
}

/// `P_σ = (I − σ) ⊗ σ*`; `⟨⟨V|P_σ|V⟩⟩` is the variance of `V` in `σ`.
pub fn state_projector(sigma: &CMatrix) -> Result<Superoperator> {
    ensure_pure_state(sigma, "σ")?;
    Ok(Superoperator::new(state_projector_unchecked(sigma), SuperKind::Projector))
}

pub(crate) fn state_projector_unchecked(sigma: &CMatrix) -> CMatrix {
    let d = sigma.nrows();
    (identity(d) - sigma).kronecker(&sigma.map(|z| z.conj()))
}

/// `M₀^σ = P_σ M₀`.
pub fn build_m0_sigma(m0: &Superoperator, sigma: &CMatrix) -> Result<Superoperator> {
    check_dim(m0.dim(), sigma.nrows())?;
    let p = state_projector(sigma)?;
    Ok(Superoperator::new(p.matrix * &m0.matrix, SuperKind::State))
}

/// Stationary two-time correlation `C(t, s)` of a classical noise field.
#[derive(Clone)]
pub enum NoiseCorrelation {
    /// `strength · δ(t − s)`.
    White { strength: f64 },
    /// `variance · exp(−|t − s| / τ_c)`; `τ_c = ∞` is the static limit.
    Exponential { tau_c: f64, variance: f64 },
    /// Arbitrary symmetric correlation function.
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for NoiseCorrelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseCorrelation::White { strength } => write!(f, "White {{ strength: {strength} }}"),
            NoiseCorrelation::Exponential { tau_c, variance } => {
                write!(f, "Exponential {{ tau_c: {tau_c}, variance: {variance} }}")
            }
            NoiseCorrelation::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl NoiseCorrelation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseCorrelation::White { strength } if !(strength >= 0.0 && strength.is_finite()) => {
                Err(Error::Config(format!("white-noise strength must be ≥ 0, got {strength}")))
            }
            NoiseCorrelation::Exponential { tau_c, variance } => {
                if !(tau_c > 0.0) {
                    return Err(Error::Config(format!("τ_c must be positive, got {tau_c}")));
                }
                if !(variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::Config(format!("variance must be ≥ 0, got {variance}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `C(t, s)` for the non-singular shapes.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            NoiseCorrelation::White { .. } => 0.0,
            NoiseCorrelation::Exponential { tau_c, variance } => {
                variance * (-(t - s).abs() / tau_c).exp()
            }
            NoiseCorrelation::Custom(c) => c(t, s),
        }
    }
}

/// Uniform grid over `[0, t_f]` with `substeps` points per segment and the
/// interaction-picture lifts `N_t = L(U₀(t, 0))` at each point.
pub(crate) fn fine_grid_lifts(prop: &Propagation, substeps: usize) -> (Vec<f64>, Vec<CMatrix>) {
    let delta = prop.dt / substeps as f64;
    let mut times = Vec::with_capacity(prop.segments.len() * substeps + 1);
    let mut lifts = Vec::with_capacity(prop.segments.len() * substeps + 1);
    for (j, seg) in prop.segments.iter().enumerate() {
        for l in 0..substeps {
            let tau = l as f64 * delta;
            let u = seg.eigen.propagator(tau) * &prop.cumulative[j];
            times.push(j as f64 * prop.dt + tau);
            lifts.push(conjugation_lift(&u));
        }
    }
    times.push(prop.duration());
    lifts.push(conjugation_lift(prop.final_unitary()));
    (times, lifts)
}

fn trapezoid_weights(n_points: usize, delta: f64) -> Vec<f64> {
    let mut w = vec![delta; n_points];
    w[0] *= 0.5;
    w[n_points - 1] *= 0.5;
    w
}

/// `K = ∫∫ C(t,s) N_t† P_σ N_s dt ds` by trapezoid quadrature on the
/// segment × substep grid; `1 − ⟨F⟩ ≈ λ² ⟨⟨V|K|V⟩⟩`.
pub fn noise_kernel(
    model: &ControlModel,
    pulse: &Pulse,
    sigma: &CMatrix,
    correlation: &NoiseCorrelation,
    substeps: usize,
) -> Result<Superoperator> {
    correlation.validate()?;
    if substeps == 0 {
        return Err(Error::Config("substeps must be at least 1".into()));
    }
    check_dim(model.dim(), sigma.nrows())?;
    ensure_pure_state(sigma, "σ")?;
    let prop = propagate_segments(model, pulse)?;
    let (times, lifts) = fine_grid_lifts(&prop, substeps);
    let n = times.len();
    let weights = trapezoid_weights(n, prop.dt / substeps as f64);
    let p_sigma = state_projector_unchecked(sigma);
    let d2 = sigma.nrows() * sigma.nrows();
    let mut k = CMatrix::zeros(d2, d2);

    match correlation {
        NoiseCorrelation::White { strength } => {
            for (lift, w) in lifts.iter().zip(&weights) {
                k += lift.adjoint() * &p_sigma * lift * C64::from(w * strength);
            }
        }
        _ => {
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] = correlation.eval(times[i], times[j]);
                }
            }
            for i in 0..n {
                for j in 0..i {
                    let (a, b) = (c[i * n + j], c[j * n + i]);
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::Config(format!(
                            "correlation is not symmetric: C({}, {}) = {a} but C({}, {}) = {b}",
                            times[i], times[j], times[j], times[i]
                        )));
                    }
                }
            }
            for i in 0..n {
                let mut z = CMatrix::zeros(d2, d2);
                for j in 0..n {
                    let cij = c[i * n + j] * weights[i] * weights[j];
                    if cij != 0.0 {
                        z += &lifts[j] * C64::from(cij);
                    }
                }
                k += lifts[i].adjoint() * &p_sigma * z;
            }
        }
    }
    let k = (&k + k.adjoint()) * C64::from(0.5);
    if max_abs(&k).is_nan() {
        return Err(Error::NonFinite("noise kernel".into()));
    }
    Ok(Superoperator::new(k, SuperKind::Kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{pauli_basis, single_qubit_model, symmetric_subspace_basis, ControlModel};
    use crate::qcore::{ket_to_density, sigma_x, sigma_y, sigma_z};
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn empty_pulse(segments: usize, tf: f64) -> Pulse {
        // a model without channels still needs one dummy column
        Pulse::zeros(segments, 1, tf).unwrap()
    }

    fn zero_drive() -> (ControlModel, Pulse) {
        let m = ControlModel::new(
            "idle",
            CMatrix::zeros(2, 2),
            vec![crate::models::Channel::Amplitude {
                operator: CMatrix::zeros(2, 2),
            }],
        )
        .unwrap();
        (m, empty_pulse(3, 1.7))
    }

    #[test]
    fn kernel_limits() {
        let q = Quadrature::Exact;
        assert_eq!(q.kernel(0.0, 0.3), C64::from(0.3));
        let w = 2.7;
        let direct = (C64::from_polar(1.0, w * 0.3) - ONE) / C64::new(0.0, w);
        assert!((q.kernel(w, 0.3) - direct).norm() < 1e-15);
        assert_eq!(Quadrature::LeftRiemann { substeps: 1 }.kernel(5.0, 0.3), C64::from(0.3));
    }

    #[test]
    fn kernel_derivative_matches_difference_quotient() {
        for q in [Quadrature::Exact, Quadrature::LeftRiemann { substeps: 3 }] {
            for &w in &[0.0, 1e-3, 0.05, 0.7, 4.0, -9.0] {
                let h = 1e-6;
                let fd = (q.kernel(w + h, 0.4) - q.kernel(w - h, 0.4)) / C64::from(2.0 * h);
                assert!((q.kernel_derivative(w, 0.4) - fd).norm() < 1e-9, "{q:?} {w}");
            }
            let dd = q.divided_difference(1.0, 1.3, 0.4);
            let quotient = (q.kernel(1.0, 0.4) - q.kernel(1.3, 0.4)) / C64::from(-0.3);
            assert!((dd - quotient).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_hamiltonian_gives_identity_m0() {
        let (m, p) = zero_drive();
        let m0 = build_m0(&m, &p, Quadrature::Exact).unwrap();
        assert!(max_abs(&(&m0.matrix - CMatrix::identity(4, 4))) < 1e-14);
        let v = sigma_z() + sigma_x() * C64::from(0.2);
        let vbar = time_average_v(&m, &p, &v, Quadrature::Exact).unwrap();
        assert!(max_abs(&(vbar - v)) < 1e-14);
    }

    #[test]
    fn full_rotation_averages_transverse_part() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::zeros(4, 1, PI).unwrap();
        let vbar = time_average_v(&m, &p, &sigma_z(), Quadrature::Exact).unwrap();
        assert!(max_abs(&vbar) < 1e-14);
        let m0 = build_m0(&m, &p, Quadrature::Exact).unwrap();
        let out = m0.apply(&sigma_z()).unwrap();
        assert!(max_abs(&out) < 1e-14);
        let vbar = time_average_v(&m, &p, &identity(2), Quadrature::Exact).unwrap();
        assert!(max_abs(&(vbar - identity(2))) < 1e-14);
    }

    #[test]
    fn m0_fixes_identity_and_matches_direct_average() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::from_duration(vec![0.3, 1.9, -0.7, 2.2, 0.1], 1, 2.5).unwrap();
        for quad in [Quadrature::Exact, Quadrature::LeftRiemann { substeps: 3 }] {
            let m0 = build_m0(&m, &p, quad).unwrap();
            let out = m0.apply(&identity(2)).unwrap();
            assert!(max_abs(&(out - identity(2))) < 1e-12);
            assert!(m0.frobenius_sq() <= 4.0 + 1e-12);
            let v = sigma_x() * C64::from(0.4) + sigma_y() - sigma_z() * C64::from(1.3);
            let direct = time_average_v(&m, &p, &v, quad).unwrap();
            assert!(max_abs(&(m0.apply(&v).unwrap() - direct)) < 1e-13);
        }
    }

    #[test]
    fn riemann_converges_first_order() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::from_duration(vec![0.3, 1.9, -0.7, 2.2], 1, 3.0).unwrap();
        let exact = build_m0(&m, &p, Quadrature::Exact).unwrap().matrix;
        let err = |s| {
            let r = build_m0(&m, &p, Quadrature::LeftRiemann { substeps: s }).unwrap().matrix;
            max_abs(&(r - &exact))
        };
        let (e1, e2) = (err(50), err(100));
        assert!((e1 / e2 - 2.0).abs() < 0.05, "ratio {}", e1 / e2);
    }

    #[test]
    fn identity_projector_properties() {
        let p0 = projector_identity(2).unwrap();
        assert!(max_abs(&(p0.apply(&identity(2)).unwrap() - identity(2))) < 1e-15);
        assert!(max_abs(&p0.apply(&sigma_x()).unwrap()) < 1e-15);
        assert!((p0.matrix.trace() - ONE).norm() < 1e-15);
        assert!(projector_identity(1).is_err());
    }

    #[test]
    fn subset_projectors() {
        let b1 = pauli_basis(1).unwrap();
        let p = projector_subset(&b1, &[0].into()).unwrap();
        assert!(max_abs(&(p.matrix - projector_identity(2).unwrap().matrix)) < 1e-15);
        let all = projector_subset(&b1, &[0, 1].into()).unwrap();
        assert!(max_abs(&(all.matrix - CMatrix::identity(4, 4))) < 1e-14);
        let b2 = pauli_basis(2).unwrap();
        let p1 = projector_subset(&b2, &[1].into()).unwrap();
        assert!((p1.matrix.trace().re - 6.0).abs() < 1e-12);
        assert!(max_abs(&(&p1.matrix * &p1.matrix - &p1.matrix)) < 1e-12);
        assert!(projector_subset(&b1, &[7].into()).is_err());
    }

    #[test]
    fn mtilde_norm_relation_and_annihilation() {
        let (m, p) = zero_drive();
        let b = pauli_basis(1).unwrap();
        let m0 = build_m0(&m, &p, Quadrature::Exact).unwrap();
        let mt = build_mtilde(&m0, &b, &[0].into()).unwrap();
        assert!((mt.frobenius_sq() - 3.0).abs() < 1e-12);
        assert!(build_mtilde(&m0, &b, &[1].into()).is_err());

        let model = crate::models::collective_spin_model(1.0, 2).unwrap();
        let pulse = Pulse::from_duration(vec![0.3, -1.0, 0.8, 0.4, -0.2, 1.1], 2, 2.0).unwrap();
        let m0 = build_m0(&model, &pulse, Quadrature::Exact).unwrap();
        let sb = symmetric_subspace_basis(2).unwrap();
        let mt = build_mtilde(&m0, &sb, &[0].into()).unwrap();
        assert!((mt.frobenius_sq() - (m0.frobenius_sq() - 1.0)).abs() < 1e-12);
        let mt2 = build_mtilde(&m0, &sb, &[0, 2].into()).unwrap();
        for (e, &c) in sb.elements().iter().zip(sb.classes()) {
            if c == 2 {
                assert!(max_abs(&mt2.apply(e).unwrap()) < 1e-13);
            }
        }
    }

    #[test]
    fn state_projector_gives_variance() {
        let zero = ket_to_density(&DVector::from_vec(vec![ONE, ZERO]));
        let p = state_projector(&zero).unwrap();
        let quad = |v: &CMatrix| {
            let x = vectorize(v);
            (x.adjoint() * &p.matrix * &x)[(0, 0)].re
        };
        assert!(quad(&sigma_z()).abs() < 1e-15);
        assert!((quad(&sigma_x()) - 1.0).abs() < 1e-15);
        assert!(max_abs(&(&p.matrix * &p.matrix - &p.matrix)) < 1e-15);
        assert!(state_projector(&(identity(2) * C64::from(0.5))).is_err());
    }

    #[test]
    fn m0_sigma_kills_identity() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::from_duration(vec![0.3, 1.9, -0.7], 1, 2.0).unwrap();
        let m0 = build_m0(&m, &p, Quadrature::Exact).unwrap();
        let plus = ket_to_density(&DVector::from_vec(vec![ONE, ONE]));
        let ms = build_m0_sigma(&m0, &plus).unwrap();
        assert!(max_abs(&ms.apply(&identity(2)).unwrap()) < 1e-14);
        let v = sigma_x() + sigma_z() * C64::from(0.5);
        let vbar = m0.apply(&v).unwrap();
        let var = (&plus * &vbar * &vbar).trace().re - (&plus * &vbar).trace().re.powi(2);
        let q = frobenius_sq(&ms.apply(&v).unwrap());
        assert!((q - var).abs() < 1e-13);
        assert!(q <= frobenius_sq(&vbar) + 1e-14);
    }

    #[test]
    fn static_kernel_factorizes() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::from_duration(vec![0.3, 1.9, -0.7, 0.5], 1, 2.0).unwrap();
        let zero = ket_to_density(&DVector::from_vec(vec![ONE, ZERO]));
        let static_c = NoiseCorrelation::Exponential {
            tau_c: f64::INFINITY,
            variance: 1.0,
        };
        let k = noise_kernel(&m, &p, &zero, &static_c, 200).unwrap();
        let m0 = build_m0(&m, &p, Quadrature::Exact).unwrap();
        let ms = build_m0_sigma(&m0, &zero).unwrap();
        let expected = ms.matrix.adjoint() * &ms.matrix * C64::from(4.0);
        assert!(max_abs(&(k.matrix - expected)) < 1e-4);
    }

    #[test]
    fn kernels_are_psd_and_reject_asymmetry() {
        let m = single_qubit_model(1.0).unwrap();
        let p = Pulse::from_duration(vec![0.3, 1.9, -0.7, 0.5], 1, 2.0).unwrap();
        let zero = ket_to_density(&DVector::from_vec(vec![ONE, ZERO]));
        for c in [
            NoiseCorrelation::White { strength: 0.3 },
            NoiseCorrelation::Exponential { tau_c: 0.4, variance: 2.0 },
        ] {
            let k = noise_kernel(&m, &p, &zero, &c, 10).unwrap();
            let eig = crate::qcore::HermitianEigen::new(&k.matrix).unwrap();
            assert!(eig.values.iter().all(|&e| e > -1e-9), "{c:?}");
        }
        let skew = NoiseCorrelation::Custom(Arc::new(|t, s| (t - s).exp()));
        assert!(matches!(noise_kernel(&m, &p, &zero, &skew, 2), Err(Error::Config(_))));
        let bad = NoiseCorrelation::Exponential { tau_c: 0.0, variance: 1.0 };
        assert!(noise_kernel(&m, &p, &zero, &bad, 2).is_err());
    }
}
