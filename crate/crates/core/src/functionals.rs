// SPDX-License-Identifier: Apache-2.0

//! Scalar cost functionals and susceptibilities.
//!
//! Every robustness functional has the form `Tr(M₀† Π M₀ R) / d`, where
//! `Π` is the identity (gate targets) or `P_σ` (state targets) and `R` is
//! the robustness projector `I − Σ_{k∈η} P_k` or `|V⟩⟩⟨⟨V|` for a known
//! perturbation. Gradients reuse the same `(Π, R)` pair.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::models::{ControlModel, OperatorBasis, Pulse, TargetSpec};
use crate::qcore::{
    ensure_hermitian, ensure_pure_state, frobenius_sq, gate_fidelity, overlap_trace,
    propagate_segments, traceless_part, vectorize, CMatrix, Propagation,
};
use crate::superop::{
    m0_pass_from, robustness_projector, state_projector_unchecked, time_average_from, M0Pass,
    Quadrature,
};

const NEGATIVE_CLAMP: f64 = -1e-12;

fn clamp_reported(value: f64, what: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite(what.to_string()));
    }
    if value < NEGATIVE_CLAMP {
        return Err(Error::Invariant(format!("{what} is negative ({value:e})")));
    }
    Ok(value.max(0.0))
}

/// Which perturbations the pulse must be insensitive to.
#[derive(Debug, Clone, PartialEq)]
pub enum Robustness {
    None,
    /// A single known Hermitian error operator.
    KnownV(CMatrix),
    /// Every operator outside the excluded classes `η` of the basis.
    Universal {
        basis: Arc<OperatorBasis>,
        excluded: BTreeSet<usize>,
    },
}

impl Robustness {
    pub fn universal(basis: OperatorBasis, excluded: impl IntoIterator<Item = usize>) -> Self {
        Robustness::Universal {
            basis: Arc::new(basis),
            excluded: excluded.into_iter().collect(),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Robustness::None)
    }
}

/// `J = (J₀ + w J_rob) / (1 + w)` for a fixed pulse shape.
#[derive(Debug, Clone)]
pub struct Objective {
    model: ControlModel,
    target: TargetSpec,
    robustness: Robustness,
    weight: f64,
    quadrature: Quadrature,
    segments: usize,
    duration: f64,
    form: Option<RobustForm>,
}

/// `(Π, R)` with `J_rob = Tr(M₀† Π M₀ R) / d`.
#[derive(Debug, Clone)]
pub(crate) struct RobustForm {
    pub left: Option<CMatrix>,
    pub right: CMatrix,
}

impl Objective {
    pub fn new(
        model: ControlModel,
        target: TargetSpec,
        robustness: Robustness,
        weight: f64,
        segments: usize,
        duration: f64,
    ) -> Result<Self> {
        check_dim(model.dim(), target.dim())?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Config(format!("weight must be ≥ 0, got {weight}")));
        }
        if segments == 0 {
            return Err(Error::Config("need at least one segment".into()));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Config(format!("duration must be positive, got {duration}")));
        }
        let form = build_form(&model, &target, &robustness)?;
        Ok(Self {
            model,
            target,
            robustness,
            weight,
            quadrature: Quadrature::Exact,
            segments,
            duration,
            form,
        })
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Result<Self> {
        quadrature.validate()?;
        self.quadrature = quadrature;
        Ok(self)
    }

    /// Same objective at a different total time (segment count fixed).
    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Config(format!("duration must be positive, got {duration}")));
        }
        let mut out = self.clone();
        out.duration = duration;
        Ok(out)
    }

    pub fn model(&self) -> &ControlModel {
        &self.model
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn robustness(&self) -> &Robustness {
        &self.robustness
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_params(&self) -> usize {
        self.segments * self.model.n_channels()
    }

    pub(crate) fn form(&self) -> Option<&RobustForm> {
        self.form.as_ref()
    }

    /// Pulse of this objective's shape carrying `params`.
    pub fn pulse(&self, params: &[f64]) -> Result<Pulse> {
        check_dim(self.n_params(), params.len())?;
        Pulse::from_duration(params.to_vec(), self.model.n_channels(), self.duration)
    }

    pub(crate) fn check_shape(&self, pulse: &Pulse) -> Result<()> {
        self.model.check_pulse(pulse)?;
        check_dim(self.segments, pulse.segments())?;
        if (pulse.duration() - self.duration).abs() > 1e-12 * self.duration {
            return Err(Error::Config(format!(
                "pulse duration {} differs from objective duration {}",
                pulse.duration(),
                self.duration
            )));
        }
        Ok(())
    }
}

fn build_form(
    model: &ControlModel,
    target: &TargetSpec,
    robustness: &Robustness,
) -> Result<Option<RobustForm>> {
    let d = model.dim();
    let right = match robustness {
        Robustness::None => return Ok(None),
        Robustness::KnownV(v) => {
            check_dim(d, v.nrows())?;
            ensure_hermitian(v, "perturbation V")?;
            let x = vectorize(v);
            &x * x.adjoint()
        }
        Robustness::Universal { basis, excluded } => {
            check_dim(d, basis.dim())?;
            robustness_projector(basis, excluded)?
        }
    };
    let left = target.initial_state().map(state_projector_unchecked);
    Ok(Some(RobustForm { left, right }))
}

impl RobustForm {
    /// `G = Π M₀ R`, the gradient kernel; `J_rob = Re⟨G, M₀⟩ / d`.
    pub(crate) fn gradient_kernel(&self, m0: &CMatrix) -> CMatrix {
        let mr = m0 * &self.right;
        match &self.left {
            Some(p) => p * mr,
            None => mr,
        }
    }

    pub(crate) fn value(&self, m0: &CMatrix, d: usize) -> (f64, CMatrix) {
        let g = self.gradient_kernel(m0);
        let v: f64 = g.iter().zip(m0.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        (v / d as f64, g)
    }
}

/// Achieved functional values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub total: f64,
    pub j0: f64,
    pub jrob: f64,
    pub weight: f64,
}

impl FunctionalValue {
    pub fn combine(j0: f64, jrob: f64, weight: f64) -> Self {
        Self {
            total: (j0 + weight * jrob) / (1.0 + weight),
            j0,
            jrob,
            weight,
        }
    }
}

/// `J₀ = 1 − F` against the target.
pub fn j_target(u0: &CMatrix, target: &TargetSpec) -> Result<f64> {
    check_dim(target.dim(), u0.nrows())?;
    let f = match target {
        TargetSpec::Unitary(t) => gate_fidelity(t, u0)?,
        TargetSpec::State { initial, target } => {
            let evolved = u0 * initial * u0.adjoint();
            overlap_trace(&evolved, target).re.clamp(0.0, 1.0)
        }
    };
    clamp_reported(1.0 - f, "J₀")
}

/// State after one evaluation: propagation plus, when robustness is
/// requested, the superoperator pass and gradient kernel.
pub(crate) struct Evaluation {
    pub value: FunctionalValue,
    pub propagation: Propagation,
    pub pass: Option<(M0Pass, CMatrix)>,
}

pub(crate) fn evaluate_full(objective: &Objective, pulse: &Pulse) -> Result<Evaluation> {
    objective.check_shape(pulse)?;
    let propagation = propagate_segments(&objective.model, pulse)?;
    let j0 = j_target(propagation.final_unitary(), &objective.target)?;
    let (jrob, pass) = match objective.form() {
        None => (0.0, None),
        Some(form) => {
            let pass = m0_pass_from(&propagation, objective.quadrature);
            let (v, g) = form.value(&pass.m0, objective.model.dim());
            (clamp_reported(v, "robustness functional")?, Some((pass, g)))
        }
    };
    Ok(Evaluation {
        value: FunctionalValue::combine(j0, jrob, objective.weight),
        propagation,
        pass,
    })
}

/// Evaluates the objective with a single propagation pass.
pub fn evaluate(objective: &Objective, pulse: &Pulse) -> Result<FunctionalValue> {
    Ok(evaluate_full(objective, pulse)?.value)
}

/// `J_V = ‖V̄₀‖² / d`.
pub fn j_known_v(model: &ControlModel, pulse: &Pulse, v: &CMatrix, quadrature: Quadrature) -> Result<f64> {
    let vbar = crate::superop::time_average_v(model, pulse, v, quadrature)?;
    clamp_reported(frobenius_sq(&vbar) / model.dim() as f64, "J_V")
}

/// `J_U = ‖M₀ (I − Σ_{k∈η} P_k)‖²_F / d`.
pub fn j_universal(
    model: &ControlModel,
    pulse: &Pulse,
    basis: &OperatorBasis,
    excluded: &BTreeSet<usize>,
    quadrature: Quadrature,
) -> Result<f64> {
    let m0 = crate::superop::build_m0(model, pulse, quadrature)?;
    let mt = crate::superop::build_mtilde(&m0, basis, excluded)?;
    clamp_reported(mt.frobenius_sq() / model.dim() as f64, "J_U")
}

/// `‖M₀^σ (I − Σ_{k∈η} P_k)‖²_F / d`; `η` need not contain 0 here.
pub fn j_state_universal(
    model: &ControlModel,
    pulse: &Pulse,
    sigma: &CMatrix,
    basis: &OperatorBasis,
    excluded: &BTreeSet<usize>,
    quadrature: Quadrature,
) -> Result<f64> {
    check_dim(model.dim(), sigma.nrows())?;
    ensure_pure_state(sigma, "σ")?;
    check_dim(model.dim(), basis.dim())?;
    let m0 = crate::superop::build_m0(model, pulse, quadrature)?;
    let ms = crate::superop::build_m0_sigma(&m0, sigma)?;
    let p = crate::superop::projector_subset(basis, excluded)?;
    let d2 = model.dim() * model.dim();
    let restricted = ms.matrix * (CMatrix::identity(d2, d2) - p.matrix);
    clamp_reported(frobenius_sq(&restricted) / model.dim() as f64, "state functional")
}

/// `χ_U = t_f² ‖V̄₀‖² / d` evaluated on the traceless part of `V`.
pub fn chi_unitary(model: &ControlModel, pulse: &Pulse, v: &CMatrix, quadrature: Quadrature) -> Result<f64> {
    ensure_hermitian(v, "perturbation V")?;
    chi_unitary_raw(model, pulse, &traceless_part(v), quadrature)
}

/// `t_f² ‖V̄₀‖² / d` on `V` as given, including any identity component.
pub fn chi_unitary_raw(model: &ControlModel, pulse: &Pulse, v: &CMatrix, quadrature: Quadrature) -> Result<f64> {
    let tf = pulse.duration();
    Ok(tf * tf * j_known_v(model, pulse, v, quadrature)?)
}

/// `χ_S = t_f² (ΔV̄₀)²` in the initial state `σ`.
pub fn chi_state(
    model: &ControlModel,
    pulse: &Pulse,
    v: &CMatrix,
    sigma: &CMatrix,
    quadrature: Quadrature,
) -> Result<f64> {
    check_dim(model.dim(), sigma.nrows())?;
    ensure_pure_state(sigma, "σ")?;
    check_dim(model.dim(), v.nrows())?;
    ensure_hermitian(v, "perturbation V")?;
    quadrature.validate()?;
    let prop = propagate_segments(model, pulse)?;
    let vbar = time_average_from(&prop, v, quadrature);
    let mean = overlap_trace(sigma, &vbar).re;
    let second = overlap_trace(sigma, &(&vbar * &vbar)).re;
    let tf = pulse.duration();
    clamp_reported(tf * tf * (second - mean * mean), "χ_S")
}

/// `max(0, 1 − χ λ²)`.
pub fn predicted_fidelity(chi: f64, lambda: f64) -> Result<f64> {
    if !(chi >= 0.0) {
        return Err(Error::Input(format!("susceptibility must be ≥ 0, got {chi}")));
    }
    Ok((1.0 - chi * lambda * lambda).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        collective_spin_model, dicke_state, pauli_basis, single_qubit_model, symmetric_subspace_basis,
        Channel,
    };
    use crate::qcore::{expm_skew, identity, ket_to_density, sigma_x, sigma_y, sigma_z, ONE, ZERO, C64};
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn idle() -> (ControlModel, Pulse) {
        let m = ControlModel::new(
            "idle",
            CMatrix::zeros(2, 2),
            vec![Channel::Amplitude {
                operator: sigma_x(),
            }],
        )
        .unwrap();
        (m, Pulse::zeros(4, 1, 1.3).unwrap())
    }

    fn ket0() -> CMatrix {
        ket_to_density(&DVector::from_vec(vec![ONE, ZERO]))
    }

    #[test]
    fn target_functional_cases() {
        let z = TargetSpec::unitary(expm_skew(&sigma_z(), PI / 2.0).unwrap()).unwrap();
        assert!((j_target(&identity(2), &z).unwrap() - 1.0).abs() < 1e-15);
        let u = expm_skew(&sigma_z(), PI / 2.0).unwrap();
        assert!(j_target(&u, &z).unwrap() < 1e-15);
        let s = TargetSpec::state(ket0(), ket0()).unwrap();
        assert!(j_target(&identity(2), &s).unwrap() < 1e-15);
    }

    #[test]
    fn known_v_cases() {
        let (m, p) = idle();
        let q = Quadrature::Exact;
        assert!((j_known_v(&m, &p, &sigma_z(), q).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(j_known_v(&m, &p, &CMatrix::zeros(2, 2), q).unwrap(), 0.0);
        let sq = single_qubit_model(1.0).unwrap();
        let full = Pulse::zeros(5, 1, PI).unwrap();
        assert!(j_known_v(&sq, &full, &sigma_z(), q).unwrap() < 1e-28);
    }

    #[test]
    fn universal_saturates_bound_at_zero_hamiltonian() {
        let (m, p) = idle();
        let b = pauli_basis(1).unwrap();
        let ju = j_universal(&m, &p, &b, &[0].into(), Quadrature::Exact).unwrap();
        assert!((ju - 1.5).abs() < 1e-13);
        assert!(j_universal(&m, &p, &b, &[1].into(), Quadrature::Exact).is_err());
    }

    #[test]
    fn restricted_excluded_set_never_increases() {
        let model = collective_spin_model(1.0, 2).unwrap();
        let pulse = Pulse::from_duration(vec![0.3, -1.0, 0.8, 0.4, -0.2, 1.1], 2, 2.0).unwrap();
        let sb = symmetric_subspace_basis(2).unwrap();
        let q = Quadrature::Exact;
        let full = j_universal(&model, &pulse, &sb, &[0].into(), q).unwrap();
        let restricted = j_universal(&model, &pulse, &sb, &[0, 2].into(), q).unwrap();
        assert!(restricted <= full + 1e-14);
        assert!(full <= 3.0 - 1.0 / 3.0 + 1e-12);
    }

    #[test]
    fn state_universal_cases() {
        let (m, p) = idle();
        let b = pauli_basis(1).unwrap();
        let q = Quadrature::Exact;
        let v = j_state_universal(&m, &p, &ket0(), &b, &[0].into(), q).unwrap();
        // variances of σ_x/√2, σ_y/√2, σ_z/√2 in |0⟩ are ½, ½, 0
        let oracle: f64 = [sigma_x(), sigma_y(), sigma_z()]
            .iter()
            .map(|s| {
                let l = s * C64::from(0.5f64.sqrt());
                let mean = overlap_trace(&ket0(), &l).re;
                overlap_trace(&ket0(), &(&l * &l)).re - mean * mean
            })
            .sum::<f64>()
            / 2.0;
        assert!((v - oracle).abs() < 1e-14 && (v - 0.5).abs() < 1e-14);
        let all = j_state_universal(&m, &p, &ket0(), &b, &[0, 1].into(), q).unwrap();
        assert!(all < 1e-28);
    }

    #[test]
    fn susceptibilities() {
        let (m, p) = idle();
        let q = Quadrature::Exact;
        let tf = p.duration();
        let chi = chi_unitary(&m, &p, &sigma_z(), q).unwrap();
        assert!((chi - tf * tf).abs() < 1e-12);
        let raw = chi_unitary_raw(&m, &p, &identity(2), q).unwrap();
        assert!((raw - tf * tf).abs() < 1e-12);
        assert!(chi_unitary(&m, &p, &identity(2), q).unwrap() < 1e-28);
        assert!(chi_state(&m, &p, &sigma_z(), &ket0(), q).unwrap() < 1e-28);
        let cx = chi_state(&m, &p, &sigma_x(), &ket0(), q).unwrap();
        assert!((cx - tf * tf).abs() < 1e-12);
    }

    #[test]
    fn predicted_fidelity_cases() {
        assert_eq!(predicted_fidelity(0.0, 3.0).unwrap(), 1.0);
        assert!((predicted_fidelity(1.0, 0.1).unwrap() - 0.99).abs() < 1e-15);
        assert!(predicted_fidelity(-1.0, 0.1).is_err());
        // cos²(λ t_f) agrees to O(λ⁴)
        for &l in &[0.05f64, 0.025] {
            let err = (predicted_fidelity(1.0, l).unwrap() - l.cos().powi(2)).abs();
            assert!(err < l.powi(4));
        }
    }

    #[test]
    fn evaluate_combines_parts() {
        let v = FunctionalValue::combine(0.2, 0.4, 1.0);
        assert!((v.total - 0.3).abs() < 1e-15);
        let sq = single_qubit_model(1.0).unwrap();
        let target = TargetSpec::unitary(expm_skew(&sigma_z(), PI / 2.0).unwrap()).unwrap();
        let pulse = Pulse::from_duration(vec![0.2, 1.0, 2.0, -0.5], 1, 3.0).unwrap();
        let none = Objective::new(sq.clone(), target.clone(), Robustness::None, 1.0, 4, 3.0).unwrap();
        let e = evaluate(&none, &pulse).unwrap();
        assert_eq!(e.total, e.j0 / 2.0);
        let unweighted =
            Objective::new(sq.clone(), target.clone(), Robustness::KnownV(sigma_z()), 0.0, 4, 3.0).unwrap();
        let e = evaluate(&unweighted, &pulse).unwrap();
        assert_eq!(e.total, e.j0);
        let known = Objective::new(sq.clone(), target.clone(), Robustness::KnownV(sigma_z()), 1.0, 4, 3.0)
            .unwrap();
        let e = evaluate(&known, &pulse).unwrap();
        let direct = j_known_v(&sq, &pulse, &sigma_z(), Quadrature::Exact).unwrap();
        assert!((e.jrob - direct).abs() < 1e-13);
        let urc = Objective::new(
            sq.clone(),
            target,
            Robustness::universal(pauli_basis(1).unwrap(), [0]),
            1.0,
            4,
            3.0,
        )
        .unwrap();
        let e = evaluate(&urc, &pulse).unwrap();
        let direct = j_universal(&sq, &pulse, &pauli_basis(1).unwrap(), &[0].into(), Quadrature::Exact)
            .unwrap();
        assert!((e.jrob - direct).abs() < 1e-13);
        assert!(evaluate(&urc, &Pulse::zeros(3, 1, 3.0).unwrap()).is_err());
    }

    #[test]
    fn state_objective_uses_variance_form() {
        let model = collective_spin_model(1.0, 4).unwrap();
        let target =
            TargetSpec::state_from_kets(&dicke_state(4, 0).unwrap(), &dicke_state(4, 2).unwrap()).unwrap();
        let pulse = Pulse::from_duration(
            (0..12).map(|i| (i as f64 * 0.7).sin()).collect(),
            2,
            1.5,
        )
        .unwrap();
        let sb = symmetric_subspace_basis(4).unwrap();
        let obj = Objective::new(model.clone(), target.clone(), Robustness::universal(sb.clone(), [0, 2, 3, 4]), 1.0, 6, 1.5)
            .unwrap();
        let e = evaluate(&obj, &pulse).unwrap();
        let sigma = &target.initial_state().unwrap().clone();
        let direct =
            j_state_universal(&model, &pulse, sigma, &sb, &[0, 2, 3, 4].into(), Quadrature::Exact).unwrap();
        assert!((e.jrob - direct).abs() < 1e-13);
        let (sx, _, _) = crate::models::spin_matrices(4);
        let known = Objective::new(model.clone(), target, Robustness::KnownV(sx.clone()), 1.0, 6, 1.5).unwrap();
        let e = evaluate(&known, &pulse).unwrap();
        let chi = chi_state(&model, &pulse, &sx, sigma, Quadrature::Exact).unwrap();
        assert!((e.jrob * 5.0 - chi / 1.5f64.powi(2)).abs() < 1e-12);
    }
}
