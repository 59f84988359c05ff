// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra and the quantum primitives everything else
//! is built from.
//!
//! Conventions used across the crate:
//!
//! * `ħ = 1`; a segment of duration `τ` under `H` evolves by `exp(-i H τ)`.
//! * Operators are vectorized row by row: component `i·d + j` of `|A⟩⟩` is
//!   `A[i][j]`. Under this convention `|B A Cᵀ⟩⟩ = (B ⊗ C)|A⟩⟩`.
//! * Matrix exponentials of Hermitian generators go through an
//!   eigendecomposition, so propagators are unitary to roundoff.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::models::{ControlModel, Pulse};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
/// Vectorized operator `|A⟩⟩`, length `d²`.
pub type VecOp = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const PURITY_TOL: f64 = 1e-8;

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖A − A†‖_max`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Input(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn ensure_hermitian(a: &CMatrix, what: &str) -> Result<()> {
    ensure_square(a)?;
    if !is_finite(a) {
        return Err(Error::Input(format!("{what} has non-finite entries")));
    }
    let defect = hermiticity_defect(a);
    if defect > HERMITIAN_TOL * (1.0 + max_abs(a)) {
        return Err(Error::Invariant(format!(
            "{what} is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(())
}

pub fn ensure_unitary(u: &CMatrix, what: &str) -> Result<()> {
    ensure_square(u)?;
    if !is_finite(u) {
        return Err(Error::Input(format!("{what} has non-finite entries")));
    }
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::Invariant(format!(
            "{what} is not unitary (defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// Checks that `rho` is a normalized pure state (`Tr ρ = 1`, `Tr ρ² > 1 − 10⁻⁸`).
pub fn ensure_pure_state(rho: &CMatrix, what: &str) -> Result<()> {
    ensure_hermitian(rho, what)?;
    let tr = rho.trace();
    if (tr - ONE).norm() > TRACE_TOL {
        return Err(Error::Input(format!(
            "{what} has trace {:.6} (expected 1)",
            tr.re
        )));
    }
    let purity = (rho * rho).trace().re;
    if purity <= 1.0 - PURITY_TOL {
        return Err(Error::Input(format!(
            "{what} is not pure (Tr ρ² = {purity:.10})"
        )));
    }
    Ok(())
}

/// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
pub fn ket_to_density(psi: &DVector<C64>) -> CMatrix {
    let norm = psi.norm();
    let v = psi / C64::from(norm);
    &v * v.adjoint()
}

/// Spectral decomposition `H = Q diag(values) Q†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Result<Self> {
        ensure_hermitian(h, "generator")?;
        Ok(Self::new_unchecked(h))
    }

    pub(crate) fn new_unchecked(h: &CMatrix) -> Self {
        let d = h.nrows();
        if d == 1 {
            return Self {
                values: vec![h[(0, 0)].re],
                vectors: identity(1),
            };
        }
        let eig = SymmetricEigen::new(h.clone());
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(-i H τ)`.
    pub fn propagator(&self, tau: f64) -> CMatrix {
        let phases: Vec<C64> = self
            .values
            .iter()
            .map(|e| C64::from_polar(1.0, -e * tau))
            .collect();
        self.reconstruct(&phases)
    }

    /// `Q diag(f) Q†`.
    pub fn reconstruct(&self, f: &[C64]) -> CMatrix {
        let q = &self.vectors;
        let mut scaled = q.clone();
        for (j, fj) in f.iter().enumerate() {
            for i in 0..q.nrows() {
                scaled[(i, j)] *= *fj;
            }
        }
        scaled * q.adjoint()
    }
}

/// `exp(-i H τ)` for Hermitian `H`.
pub fn expm_skew(h: &CMatrix, tau: f64) -> Result<CMatrix> {
    if !tau.is_finite() {
        return Err(Error::Input("non-finite evolution time".into()));
    }
    let eig = HermitianEigen::new(h)?;
    Ok(eig.propagator(tau))
}

/// One constant-Hamiltonian segment of a piecewise-constant evolution.
#[derive(Debug, Clone)]
pub struct Segment {
    pub hamiltonian: CMatrix,
    pub eigen: HermitianEigen,
    /// `U_j = exp(-i H_j Δt)`.
    pub unitary: CMatrix,
}

impl Segment {
    pub fn new(hamiltonian: CMatrix, dt: f64) -> Self {
        let eigen = HermitianEigen::new_unchecked(&hamiltonian);
        let unitary = eigen.propagator(dt);
        Self {
            hamiltonian,
            eigen,
            unitary,
        }
    }
}

/// Segment propagators and the cumulative products `U(t_k, 0)`.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub segments: Vec<Segment>,
    /// `cumulative[k] = U(t_k, 0)`, `k = 0..=N_P`, with `cumulative[0] = I`.
    pub cumulative: Vec<CMatrix>,
    pub dt: f64,
}

impl Propagation {
    pub fn final_unitary(&self) -> &CMatrix {
        self.cumulative.last().expect("at least the identity")
    }

    pub fn segment_unitaries(&self) -> impl Iterator<Item = &CMatrix> {
        self.segments.iter().map(|s| &s.unitary)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.segments.len() as f64
    }
}

/// Propagates a pulse through its model segment by segment.
pub fn propagate_segments(model: &ControlModel, pulse: &Pulse) -> Result<Propagation> {
    model.check_pulse(pulse)?;
    let dt = pulse.dt();
    let d = model.dim();
    let mut segments = Vec::with_capacity(pulse.segments());
    let mut cumulative = Vec::with_capacity(pulse.segments() + 1);
    cumulative.push(identity(d));
    for k in 0..pulse.segments() {
        let seg = Segment::new(model.hamiltonian(pulse.row(k)), dt);
        let next = &seg.unitary * cumulative.last().unwrap();
        cumulative.push(next);
        segments.push(seg);
    }
    Ok(Propagation {
        segments,
        cumulative,
        dt,
    })
}

/// `|Tr(A†B)|² / d²`; insensitive to global phases.
pub fn gate_fidelity(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_dim(a.nrows(), b.nrows())?;
    let d = a.nrows() as f64;
    let overlap = hs_inner(a, b)?;
    Ok((overlap.norm_sqr() / (d * d)).min(1.0))
}

/// `Tr(ρ ρ')` for pure states.
pub fn state_fidelity(rho: &CMatrix, other: &CMatrix) -> Result<f64> {
    check_dim(rho.nrows(), other.nrows())?;
    for (m, what) in [(rho, "first state"), (other, "second state")] {
        let tr = m.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::Input(format!(
                "{what} has trace {:.10} (expected 1)",
                tr.re
            )));
        }
    }
    ensure_pure_state(rho, "first state")?;
    ensure_pure_state(other, "second state")?;
    Ok(overlap_trace(rho, other).re.clamp(0.0, 1.0))
}

/// `Tr(A B)` without forming the product.
pub(crate) fn overlap_trace(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Row-stacking vectorization `A ↦ |A⟩⟩`.
pub fn vectorize(a: &CMatrix) -> VecOp {
    let (r, c) = a.shape();
    VecOp::from_fn(r * c, |idx, _| a[(idx / c, idx % c)])
}

pub fn devectorize(v: &VecOp) -> Result<CMatrix> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || n == 0 {
        return Err(Error::Input(format!(
            "vector of length {n} is not a vectorized square matrix"
        )));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| v[i * d + j]))
}

/// Hilbert–Schmidt inner product `Tr(A†B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `⟨⟨A|B⟩⟩` on vectorized operators.
pub fn vec_inner(a: &VecOp, b: &VecOp) -> C64 {
    a.dotc(b)
}

/// `‖A‖²_F = Tr(A†A)`.
pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// The superoperator `U† ⊗ Uᵀ = [U ⊗ U*]†`, which maps `|V⟩⟩` to `|U† V U⟩⟩`.
pub fn conjugation_lift(u: &CMatrix) -> CMatrix {
    let d = u.nrows();
    let mut out = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for k in 0..d {
            // (U†)_{ik} = conj(U_{ki})
            let a = u[(k, i)].conj();
            if a == ZERO {
                continue;
            }
            for j in 0..d {
                for l in 0..d {
                    // (Uᵀ)_{jl} = U_{lj}
                    out[(i * d + j, k * d + l)] = a * u[(l, j)];
                }
            }
        }
    }
    out
}

/// Nearest unitary in Frobenius norm (polar factor `W V†` of `A = W Σ V†`).
pub fn polar_unitary(a: &CMatrix) -> Result<CMatrix> {
    ensure_square(a)?;
    let svd = a.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Input("SVD failed to produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Input("SVD failed to produce V†".into()))?;
    Ok(u * v_t)
}

/// `(A − (Tr A / d) I)`.
pub fn traceless_part(a: &CMatrix) -> CMatrix {
    let d = a.nrows();
    let shift = a.trace() / C64::from(d as f64);
    a - identity(d) * shift
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        max_abs(&(a - b)) < tol
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let u = expm_skew(&CMatrix::zeros(3, 3), 1.0).unwrap();
        assert!(close(&u, &identity(3), 1e-15));
    }

    #[test]
    fn expm_diagonal_and_pauli_period() {
        let u = expm_skew(&sigma_z(), PI / 2.0).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[-I, ZERO, ZERO, I]);
        assert!(close(&u, &expected, 1e-14));

        let u = expm_skew(&sigma_x(), PI).unwrap();
        assert!(close(&u, &(-identity(2)), 1e-14));
    }

    #[test]
    fn expm_rejects_non_hermitian_and_nan() {
        let mut h = sigma_x();
        h[(0, 1)] = C64::new(2.0, 0.0);
        assert!(matches!(expm_skew(&h, 1.0), Err(Error::Invariant(_))));
        let mut h = sigma_x();
        h[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(expm_skew(&h, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn gate_fidelity_cases() {
        let u = expm_skew(&sigma_y(), 0.3).unwrap();
        assert!((gate_fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-14);
        assert!(gate_fidelity(&identity(2), &sigma_x()).unwrap().abs() < 1e-15);
        let theta: f64 = 0.7;
        let rz = expm_skew(&sigma_z(), theta / 2.0).unwrap();
        let f = gate_fidelity(&identity(2), &rz).unwrap();
        assert!((f - (theta / 2.0).cos().powi(2)).abs() < 1e-14);
        let phased = &u * C64::from_polar(1.0, 1.234);
        assert!((gate_fidelity(&u, &phased).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            gate_fidelity(&identity(2), &identity(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn state_fidelity_cases() {
        let zero = ket_to_density(&DVector::from_vec(vec![ONE, ZERO]));
        let one = ket_to_density(&DVector::from_vec(vec![ZERO, ONE]));
        let plus = ket_to_density(&DVector::from_vec(vec![ONE, ONE]));
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!(state_fidelity(&zero, &one).unwrap().abs() < 1e-15);
        assert!((state_fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-15);
        let bad = &zero * C64::from(1.5);
        assert!(matches!(state_fidelity(&bad, &zero), Err(Error::Input(_))));
    }

    #[test]
    fn vectorize_small_cases() {
        let v = vectorize(&identity(2));
        assert_eq!(v.as_slice(), &[ONE, ZERO, ZERO, ONE]);
        let v = vectorize(&sigma_x());
        assert_eq!(v.as_slice(), &[ZERO, ONE, ONE, ZERO]);
        assert!(devectorize(&VecOp::zeros(3)).is_err());
    }

    #[test]
    fn hs_inner_cases() {
        assert_eq!(hs_inner(&sigma_x(), &sigma_x()).unwrap(), C64::from(2.0));
        assert_eq!(hs_inner(&sigma_x(), &sigma_y()).unwrap(), ZERO);
        assert_eq!(hs_inner(&identity(4), &identity(4)).unwrap(), C64::from(4.0));
        assert!(hs_inner(&identity(2), &identity(3)).is_err());
    }

    #[test]
    fn conjugation_lift_matches_direct_conjugation() {
        let u = expm_skew(&(sigma_x() * C64::from(0.4) + sigma_z() * C64::from(1.1)), 0.9)
            .unwrap();
        let v = sigma_y() + sigma_z() * C64::from(0.3);
        let lhs = &conjugation_lift(&u) * vectorize(&v);
        let rhs = vectorize(&(u.adjoint() * &v * &u));
        assert!((lhs - rhs).norm() < 1e-14);
    }
}
