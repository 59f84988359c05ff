// SPDX-License-Identifier: Apache-2.0

//! Robustness checks that simulate the perturbed dynamics directly rather
//! than going through the superoperator.

mod noise;

pub use noise::{noise_monte_carlo, NoiseEstimate, DEFAULT_NOISE_SUBSTEPS, MIN_TRAJECTORIES};

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::models::{ControlModel, OperatorBasis, Pulse, TargetSpec};
use crate::optimize::derive_seed;
use crate::qcore::{
    ensure_hermitian, frobenius_sq, gate_fidelity, identity, propagate_segments, CMatrix, HermitianEigen, C64,
};

/// Upper edge of the perturbative window used by curvature fits.
pub const FIT_WINDOW: f64 = 0.05;
pub const MIN_FIT_POINTS: usize = 5;
/// Floor for the relative deviation denominator.
pub const CHI_FLOOR: f64 = 1e-8;

/// `U_λ(t_f, 0) = Π_k exp(−i(H_k + λV)Δt)`.
pub fn perturbed_propagator(model: &ControlModel, pulse: &Pulse, v: &CMatrix, lambda: f64) -> Result<CMatrix> {
    check_dim(model.dim(), v.nrows())?;
    ensure_hermitian(v, "perturbation V")?;
    if !lambda.is_finite() {
        return Err(Error::Input(format!("non-finite perturbation strength {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(propagate_segments(model, pulse)?.final_unitary().clone());
    }
    model.check_pulse(pulse)?;
    let dv = v * C64::from(lambda);
    let mut u = identity(model.dim());
    for k in 0..pulse.segments() {
        let h = model.hamiltonian(pulse.row(k)) + &dv;
        u = HermitianEigen::new_unchecked(&h).propagator(pulse.dt()) * u;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityKind {
    Gate,
    State,
}

/// Fidelity of the perturbed evolution against the target.
fn fidelity_at(model: &ControlModel, pulse: &Pulse, target: &TargetSpec, v: &CMatrix, lambda: f64) -> Result<f64> {
    let u = perturbed_propagator(model, pulse, v, lambda)?;
    match target {
        TargetSpec::Unitary(t) => gate_fidelity(t, &u),
        TargetSpec::State { initial, target } => {
            let evolved = &u * initial * u.adjoint();
            Ok(crate::qcore::overlap_trace(&evolved, target).re.clamp(0.0, 1.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub lambdas: Vec<f64>,
    pub fidelities: Vec<f64>,
    pub kind: FidelityKind,
    /// Perturbation description, e.g. an operator name or "random, 20 realizations".
    pub label: String,
    pub seed: Option<u64>,
    /// Per-realization fidelities for averaged curves.
    pub realizations: Vec<Vec<f64>>,
}

impl SweepCurve {
    pub fn infidelities(&self) -> Vec<f64> {
        self.fidelities.iter().map(|f| 1.0 - f).collect()
    }

    /// `F(0)`; every sweep grid contains zero.
    pub fn anchor(&self) -> f64 {
        let i = self.lambdas.iter().position(|l| *l == 0.0).expect("grid contains 0");
        self.fidelities[i]
    }
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if !lambdas.contains(&0.0) {
        return Err(Error::Config("λ grid must contain 0".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("λ grid has non-finite entries".into()));
    }
    Ok(())
}

fn kind_of(target: &TargetSpec) -> FidelityKind {
    match target {
        TargetSpec::Unitary(_) => FidelityKind::Gate,
        TargetSpec::State { .. } => FidelityKind::State,
    }
}

/// `F(λ)` of `H₀ + λV` against `target` on every grid point.
pub fn fidelity_sweep(
    model: &ControlModel,
    pulse: &Pulse,
    target: &TargetSpec,
    v: &CMatrix,
    lambdas: &[f64],
    label: impl Into<String>,
) -> Result<SweepCurve> {
    check_grid(lambdas)?;
    check_dim(model.dim(), target.dim())?;
    let fidelities = lambdas
        .par_iter()
        .map(|&l| fidelity_at(model, pulse, target, v, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve {
        lambdas: lambdas.to_vec(),
        fidelities,
        kind: kind_of(target),
        label: label.into(),
        seed: None,
        realizations: Vec::new(),
    })
}

/// Random traceless Hermitian direction: Gaussian coefficients on the basis
/// elements of the allowed classes, normalized. On a qubit the result is
/// `n⃗·σ⃗` with `n⃗` uniform on the sphere; otherwise it has unit
/// Hilbert–Schmidt norm.
pub fn random_direction(basis: &OperatorBasis, classes: &BTreeSet<usize>, rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let d = basis.dim();
    let members: Vec<usize> = (0..basis.len())
        .filter(|&j| basis.class_of(j) != 0 && classes.contains(&basis.class_of(j)))
        .collect();
    if members.is_empty() {
        return Err(Error::Config("no traceless basis elements in the selected classes".into()));
    }
    let mut v = CMatrix::zeros(d, d);
    for &j in &members {
        let c: f64 = StandardNormal.sample(rng);
        v += basis.element(j) * C64::from(c);
    }
    let v = (&v + v.adjoint()) * C64::from(0.5);
    let norm = frobenius_sq(&v).sqrt();
    if norm == 0.0 {
        return Err(Error::NonFinite("degenerate random direction".into()));
    }
    let scale = if d == 2 { 2f64.sqrt() } else { 1.0 };
    Ok(v * C64::from(scale / norm))
}

/// The directions drawn by [`random_direction_sweep`] for a given seed.
pub fn random_directions(
    basis: &OperatorBasis,
    classes: &BTreeSet<usize>,
    n_realizations: usize,
    seed: u64,
) -> Result<Vec<CMatrix>> {
    (0..n_realizations)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64, 0));
            random_direction(basis, classes, &mut rng)
        })
        .collect()
}

/// Average of `n_realizations` sweeps along random traceless directions in
/// the span of `classes`.
#[allow(clippy::too_many_arguments)]
pub fn random_direction_sweep(
    model: &ControlModel,
    pulse: &Pulse,
    target: &TargetSpec,
    basis: &OperatorBasis,
    classes: &BTreeSet<usize>,
    n_realizations: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<SweepCurve> {
    if n_realizations == 0 {
        return Err(Error::Config("need at least one realization".into()));
    }
    check_dim(model.dim(), basis.dim())?;
    let directions = random_directions(basis, classes, n_realizations, seed)?;
    let curves = directions
        .par_iter()
        .map(|v| fidelity_sweep(model, pulse, target, v, lambdas, ""))
        .collect::<Result<Vec<_>>>()?;
    let n = n_realizations as f64;
    let fidelities = (0..lambdas.len())
        .map(|i| curves.iter().map(|c| c.fidelities[i]).sum::<f64>() / n)
        .collect();
    Ok(SweepCurve {
        lambdas: lambdas.to_vec(),
        fidelities,
        kind: kind_of(target),
        label: format!("random, {n_realizations} realizations"),
        seed: Some(seed),
        realizations: curves.into_iter().map(|c| c.fidelities).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureFit {
    /// Least-squares coefficient of `λ²` in `1 − F(λ) − (1 − F(0))`.
    pub fitted: f64,
    pub predicted: f64,
    /// `|fitted − predicted| / max(predicted, 10⁻⁸)`.
    pub deviation: f64,
    /// Largest `|λ|` used.
    pub window: f64,
    pub points: usize,
    /// Root-mean-square fit residual.
    pub residual: f64,
}

/// Quadratic fit of the infidelity on the perturbative window
/// `1 − F ≤ 0.05`. No linear or cubic terms: `F′(0) = 0` for Hermitian
/// perturbations, and on symmetric grids the cubic term is orthogonal to `λ²`.
pub fn curvature_check(curve: &SweepCurve, predicted: f64) -> Result<CurvatureFit> {
    let anchor = 1.0 - curve.anchor();
    let pts: Vec<(f64, f64)> = curve
        .lambdas
        .iter()
        .zip(&curve.fidelities)
        .map(|(l, f)| (*l, 1.0 - f))
        .filter(|(_, inf)| *inf <= FIT_WINDOW)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Config(format!(
            "only {} grid points in the perturbative window, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let s4: f64 = pts.iter().map(|(l, _)| l.powi(4)).sum();
    if s4 == 0.0 {
        return Err(Error::Config("fit window contains only λ = 0".into()));
    }
    let fitted = pts.iter().map(|(l, inf)| l * l * (inf - anchor)).sum::<f64>() / s4;
    let residual = (pts
        .iter()
        .map(|(l, inf)| (inf - anchor - fitted * l * l).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(CurvatureFit {
        fitted,
        predicted,
        deviation: (fitted - predicted).abs() / predicted.max(CHI_FLOOR),
        window: pts.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max),
        points: pts.len(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneDesignReport {
    /// `(basis index, deviation)` for every traceless element.
    pub deviations: Vec<(usize, f64)>,
    pub max_deviation: f64,
    pub sum_of_squares: f64,
    /// Left-Riemann substeps per segment of the sampling grid.
    pub substeps: usize,
}

/// `‖(1/L) Σ_k U_k† Λ U_k − (Tr Λ/d) I‖` over the `L = n_samples` left
/// Riemann points `t_j + lΔt/s`, for every traceless basis element. This is
/// the same grid as `Quadrature::LeftRiemann { substeps: n_samples / N_P }`.
pub fn one_design_check(
    model: &ControlModel,
    pulse: &Pulse,
    basis: &OperatorBasis,
    n_samples: usize,
) -> Result<OneDesignReport> {
    check_dim(model.dim(), basis.dim())?;
    let segments = pulse.segments();
    if n_samples < segments || n_samples % segments != 0 {
        return Err(Error::Config(format!(
            "sample count {n_samples} must be a positive multiple of the segment count {segments}"
        )));
    }
    let substeps = n_samples / segments;
    let prop = propagate_segments(model, pulse)?;
    let delta = prop.dt / substeps as f64;
    let mut samples = Vec::with_capacity(n_samples);
    for (j, seg) in prop.segments.iter().enumerate() {
        for l in 0..substeps {
            samples.push(seg.eigen.propagator(l as f64 * delta) * &prop.cumulative[j]);
        }
    }
    let d = model.dim();
    let deviations: Vec<(usize, f64)> = (0..basis.len())
        .filter(|&j| basis.class_of(j) != 0)
        .map(|j| {
            let lam = basis.element(j);
            let mut avg = CMatrix::zeros(d, d);
            for u in &samples {
                avg += u.adjoint() * lam * u;
            }
            avg /= C64::from(n_samples as f64);
            let shift = lam.trace() / C64::from(d as f64);
            for i in 0..d {
                avg[(i, i)] -= shift;
            }
            (j, frobenius_sq(&avg).sqrt())
        })
        .collect();
    Ok(OneDesignReport {
        max_deviation: deviations.iter().map(|x| x.1).fold(0.0, f64::max),
        sum_of_squares: deviations.iter().map(|x| x.1 * x.1).sum(),
        deviations,
        substeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{chi_state, chi_unitary, j_universal};
    use crate::models::{collective_spin_model, pauli_basis, single_qubit_model, symmetric_subspace_basis, Channel, TargetSpec};
    use crate::qcore::{expm_skew, ket_to_density, max_abs, sigma_x, sigma_y, sigma_z};
    use crate::superop::Quadrature;
    use nalgebra::DVector;

    fn free_model() -> ControlModel {
        ControlModel::new("free", CMatrix::zeros(2, 2), vec![Channel::Amplitude { operator: sigma_x() }]).unwrap()
    }

    fn sym_grid(max: f64, n: usize) -> Vec<f64> {
        (0..=2 * n).map(|i| max * (i as f64 - n as f64) / n as f64).collect()
    }

    fn random_pulse(segments: usize, seed: u64, tf: f64) -> Pulse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..segments).map(|_| { let g: f64 = StandardNormal.sample(&mut rng); 6.0 * g }).collect();
        Pulse::from_duration(vals, 1, tf).unwrap()
    }

    #[test]
    fn zero_lambda_reproduces_propagation() {
        let model = single_qubit_model(0.5).unwrap();
        let pulse = random_pulse(7, 1, 3.0);
        let u = perturbed_propagator(&model, &pulse, &sigma_z(), 0.0).unwrap();
        assert_eq!(&u, propagate_segments(&model, &pulse).unwrap().final_unitary());
    }

    #[test]
    fn free_evolution_under_perturbation() {
        let pulse = Pulse::zeros(5, 1, 2.0).unwrap();
        let u = perturbed_propagator(&free_model(), &pulse, &sigma_z(), 0.3).unwrap();
        let expected = expm_skew(&sigma_z(), 0.6).unwrap();
        assert!(max_abs(&(u - expected)) < 1e-13);
    }

    #[test]
    fn segment_splitting_is_a_group_product() {
        let model = single_qubit_model(0.5).unwrap();
        let pulse = random_pulse(4, 2, 2.0);
        let doubled: Vec<f64> = pulse.params().iter().flat_map(|v| [*v, *v]).collect();
        let fine = Pulse::from_duration(doubled, 1, 2.0).unwrap();
        let a = perturbed_propagator(&model, &pulse, &sigma_y(), 0.2).unwrap();
        let b = perturbed_propagator(&model, &fine, &sigma_y(), 0.2).unwrap();
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn grid_without_zero_rejected() {
        let t = TargetSpec::unitary(identity(2)).unwrap();
        let pulse = Pulse::zeros(2, 1, 1.0).unwrap();
        let err = fidelity_sweep(&free_model(), &pulse, &t, &sigma_z(), &[0.1, 0.2], "z");
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn free_curvature_is_tf_squared() {
        let tf = 1.7;
        let pulse = Pulse::zeros(3, 1, tf).unwrap();
        let t = TargetSpec::unitary(identity(2)).unwrap();
        let curve = fidelity_sweep(&free_model(), &pulse, &t, &sigma_z(), &sym_grid(0.01, 5), "z").unwrap();
        assert!(curve.fidelities.iter().all(|f| *f <= 1.0 + 1e-12));
        let fit = curvature_check(&curve, tf * tf).unwrap();
        assert!(fit.deviation < 5e-3, "{fit:?}");
        assert_eq!(fit.points, 11);
    }

    #[test]
    fn degenerate_prediction_uses_floor() {
        let pulse = Pulse::zeros(3, 1, 1.0).unwrap();
        let t = TargetSpec::unitary(identity(2)).unwrap();
        // identity perturbation only adds a global phase
        let curve = fidelity_sweep(&free_model(), &pulse, &t, &identity(2), &sym_grid(0.1, 3), "I").unwrap();
        let fit = curvature_check(&curve, 0.0).unwrap();
        assert!(fit.fitted.abs() < 1e-8);
        assert!(fit.deviation < 1.0);
    }

    #[test]
    fn window_requires_five_points() {
        let pulse = Pulse::zeros(3, 1, 10.0).unwrap();
        let t = TargetSpec::unitary(identity(2)).unwrap();
        let curve = fidelity_sweep(&free_model(), &pulse, &t, &sigma_z(), &[-1.0, 0.0, 1.0], "z").unwrap();
        assert!(curvature_check(&curve, 100.0).is_err());
    }

    #[test]
    fn curvature_matches_predicted_susceptibility() {
        let model = single_qubit_model(0.5).unwrap();
        let quad = Quadrature::Exact;
        for seed in 0..3 {
            let pulse = random_pulse(8, seed, 4.0);
            let u0 = propagate_segments(&model, &pulse).unwrap().final_unitary().clone();
            let t = TargetSpec::unitary(u0).unwrap();
            let v = sigma_x() * C64::from(0.6) + sigma_z() * C64::from(0.8);
            let chi = chi_unitary(&model, &pulse, &v, quad).unwrap();
            let curve = fidelity_sweep(&model, &pulse, &t, &v, &sym_grid(2e-3, 5), "v").unwrap();
            let fit = curvature_check(&curve, chi).unwrap();
            assert!(fit.deviation < 1e-2, "seed {seed}: {fit:?}");
        }
    }

    #[test]
    fn state_curvature_matches_variance() {
        let model = collective_spin_model(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pulse = Pulse::from_duration(vals, 2, 6.0).unwrap();
        let psi = DVector::from_vec(vec![C64::from(1.0), C64::from(0.0), C64::from(0.0)]);
        let sigma = ket_to_density(&psi);
        let u0 = propagate_segments(&model, &pulse).unwrap().final_unitary().clone();
        let rho = &u0 * &sigma * u0.adjoint();
        let t = TargetSpec::state(sigma.clone(), rho).unwrap();
        let (sx, _, sz) = crate::models::spin_matrices(2);
        let v = &sx + &sz * &sz;
        let chi = chi_state(&model, &pulse, &v, &sigma, Quadrature::Exact).unwrap();
        let curve = fidelity_sweep(&model, &pulse, &t, &v, &sym_grid(1e-3, 5), "v").unwrap();
        assert_eq!(curve.kind, FidelityKind::State);
        let fit = curvature_check(&curve, chi).unwrap();
        assert!(fit.deviation < 1e-2, "{fit:?}");
    }

    #[test]
    fn random_directions_are_reproducible_and_normalized() {
        let basis = pauli_basis(1).unwrap();
        let classes: BTreeSet<usize> = [1].into();
        let a = random_directions(&basis, &classes, 4, 9).unwrap();
        assert_eq!(a, random_directions(&basis, &classes, 4, 9).unwrap());
        for v in &a {
            assert!((frobenius_sq(v) - 2.0).abs() < 1e-12);
            assert!(v.trace().norm() < 1e-14);
        }
        let sym = symmetric_subspace_basis(2).unwrap();
        let b = random_directions(&sym, &[1, 2].into(), 3, 1).unwrap();
        assert!(b.iter().all(|v| (frobenius_sq(v) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_realization_equals_plain_sweep() {
        let model = single_qubit_model(0.5).unwrap();
        let pulse = random_pulse(6, 3, 3.0);
        let t = TargetSpec::unitary(identity(2)).unwrap();
        let basis = pauli_basis(1).unwrap();
        let classes: BTreeSet<usize> = [1].into();
        let grid = sym_grid(0.1, 2);
        let avg = random_direction_sweep(&model, &pulse, &t, &basis, &classes, 1, &grid, 4).unwrap();
        let v = &random_directions(&basis, &classes, 1, 4).unwrap()[0];
        let plain = fidelity_sweep(&model, &pulse, &t, v, &grid, "").unwrap();
        assert_eq!(avg.fidelities, plain.fidelities);
        let three = random_direction_sweep(&model, &pulse, &t, &basis, &classes, 3, &grid, 4).unwrap();
        for (i, f) in three.fidelities.iter().enumerate() {
            let mean = three.realizations.iter().map(|r| r[i]).sum::<f64>() / 3.0;
            assert_eq!(*f, mean);
        }
    }

    #[test]
    fn zero_hamiltonian_is_not_a_design() {
        let pulse = Pulse::zeros(4, 1, 1.0).unwrap();
        let report = one_design_check(&free_model(), &pulse, &pauli_basis(1).unwrap(), 8).unwrap();
        assert_eq!(report.deviations.len(), 3);
        for (_, dev) in &report.deviations {
            assert!((dev - 1.0).abs() < 1e-12);
        }
        assert!(one_design_check(&free_model(), &pulse, &pauli_basis(1).unwrap(), 6).is_err());
    }

    #[test]
    fn design_deviation_sums_to_mtilde_norm() {
        let model = single_qubit_model(0.5).unwrap();
        let pulse = random_pulse(5, 8, 3.0);
        let basis = pauli_basis(1).unwrap();
        let report = one_design_check(&model, &pulse, &basis, 20).unwrap();
        let ju = j_universal(&model, &pulse, &basis, &[0].into(), Quadrature::LeftRiemann { substeps: 4 }).unwrap();
        assert!((report.sum_of_squares - 2.0 * ju).abs() < 1e-12);
    }
}
