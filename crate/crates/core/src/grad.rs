// SPDX-License-Identifier: Apache-2.0

//! Gradients of the functionals with respect to the pulse parameters.
//!
//! [`objective_gradient`] differentiates the full objective exactly: every
//! parameter of segment `j` enters only through `H_j`, so the derivative is
//! `Re Tr(Z_j ∂H_j/∂v)` for one accumulated `d × d` matrix `Z_j` per
//! segment. Derivatives of the segment propagator and of the segment
//! superoperator `f(Ĥ_j)` use Daleckii–Krein divided differences in the
//! eigenbasis of `H_j`.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::functionals::{evaluate_full, FunctionalValue, Objective};
use crate::models::{ControlModel, OperatorBasis, Pulse, TargetSpec};
use crate::qcore::{
    conjugation_lift, expm_skew, overlap_trace, propagate_segments, CMatrix, HermitianEigen, C64,
    I, ZERO,
};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    /// Exact chain rule through the segment eigendecompositions.
    Exact,
    /// Double-sum gradient of `‖M₀‖²` on the segment-boundary grid.
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub method: GradientMethod,
    /// Step used by finite differences.
    pub step: Option<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// How `∂U_k` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Fréchet derivative of the exponential.
    Exact,
    /// `−iΔt (∂H) U_k`, accurate to `O(Δt²)`.
    ShortTime,
}

/// `(e^{−ixΔt} − e^{−iyΔt}) / (x − y)`, exact for coincident arguments.
fn exp_divided_difference(x: f64, y: f64, dt: f64) -> C64 {
    let half = 0.5 * (x - y) * dt;
    let sinc = if half.abs() < 1e-12 { 1.0 } else { half.sin() / half };
    C64::from_polar(dt * sinc, -0.5 * (x + y) * dt) * (-I)
}

/// `Q (L ∘ (Q† A Q)) Q†` with `L_ab = exp[e_a, e_b]`: the directional
/// derivative of `exp(−iHΔt)` along `A`.
pub(crate) fn exp_frechet(eigen: &HermitianEigen, a: &CMatrix, dt: f64) -> CMatrix {
    let q = &eigen.vectors;
    let e = &eigen.values;
    let mut x = q.adjoint() * a * q;
    let d = e.len();
    for i in 0..d {
        for j in 0..d {
            x[(i, j)] *= exp_divided_difference(e[i], e[j], dt);
        }
    }
    q * x * q.adjoint()
}

/// `∂U_k / ∂v_{k,c}` for segment `k` and channel `c`.
pub fn segment_unitary_derivative(
    model: &ControlModel,
    pulse: &Pulse,
    k: usize,
    channel: usize,
    mode: DerivativeMode,
) -> Result<CMatrix> {
    model.check_pulse(pulse)?;
    if k >= pulse.segments() {
        return Err(Error::Config(format!(
            "segment {k} out of range ({} segments)",
            pulse.segments()
        )));
    }
    let row = pulse.row(k);
    let w = model.hamiltonian_derivative(row, channel)?;
    let h = model.hamiltonian(row);
    let eigen = HermitianEigen::new(&h)?;
    Ok(match mode {
        DerivativeMode::Exact => exp_frechet(&eigen, &w, pulse.dt()),
        DerivativeMode::ShortTime => (w * eigen.propagator(pulse.dt())) * (-I * pulse.dt()),
    })
}

/// `e^{−iΔt H_d} e^{−iΔt φ W} e^{½Δt² φ [H_d, W]}`, a third-order-accurate
/// split of `exp(−iΔt (H_d + φW))`.
pub fn bch_split(drift: &CMatrix, control: &CMatrix, phi: f64, dt: f64) -> Result<CMatrix> {
    check_dim(drift.nrows(), control.nrows())?;
    let comm = drift * control - control * drift;
    // exp(c·A) = exp(−i (iA) c) for anti-Hermitian A
    let correction = expm_skew(&(comm * I), 0.5 * dt * dt * phi)?;
    Ok(expm_skew(drift, dt)? * expm_skew(control, dt * phi)? * correction)
}

/// Central differences of `f` at `params`, one evaluation pair per entry.
pub fn grad_finite_difference<F>(f: F, params: &[f64], h: f64) -> Result<Gradient>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    let values = (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut x = params.to_vec();
            x[i] = params[i] + h;
            let up = f(&x)?;
            x[i] = params[i] - h;
            let down = f(&x)?;
            let g = (up - down) / (2.0 * h);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFinite(format!("finite difference of parameter {i}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Gradient {
        values,
        method: GradientMethod::FiniteDifference,
        step: Some(h),
    })
}

/// Central-difference gradient of the full objective.
pub fn objective_gradient_fd(objective: &Objective, pulse: &Pulse, h: f64) -> Result<Gradient> {
    objective.check_shape(pulse)?;
    grad_finite_difference(
        |x| Ok(crate::functionals::evaluate(objective, &pulse.with_params(x)?)?.total),
        pulse.params(),
        h,
    )
}

/// `Re Σ conj(B_r) ∂L_r` as `Re Σ_pq E_pq ∂U_pq` for `L(U) = U† ⊗ Uᵀ`.
fn lift_cotangent(b: &CMatrix, u: &CMatrix) -> CMatrix {
    let d = u.nrows();
    let mut e = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for k in 0..d {
                for l in 0..d {
                    let bv = b[(row, k * d + l)];
                    if bv == ZERO {
                        continue;
                    }
                    // conj(B)·conj(dU_ki)·U_lj  and  conj(B)·conj(U_ki)·dU_lj
                    e[(k, i)] += bv * u[(l, j)].conj();
                    e[(l, j)] += (bv * u[(k, i)]).conj();
                }
            }
        }
    }
    e
}

/// Exact value and gradient of the objective.
pub fn objective_gradient(objective: &Objective, pulse: &Pulse) -> Result<(FunctionalValue, Gradient)> {
    let eval = evaluate_full(objective, pulse)?;
    let prop = &eval.propagation;
    let n = prop.segments.len();
    let d = objective.model().dim();
    let dt = prop.dt;
    let w = objective.weight();
    let w0 = 1.0 / (1.0 + w);
    let wr = w / (1.0 + w);
    let wn = prop.final_unitary();

    // Cotangent of U_j (E, with contribution Re Σ E_pq dU_pq) and of H_j
    // through S_j (Z, with contribution Re Tr(Z dH)).
    let mut e_u: Vec<CMatrix> = vec![CMatrix::zeros(d, d); n];
    let mut z_h: Vec<CMatrix> = vec![CMatrix::zeros(d, d); n];

    // J₀ = 1 − F
    match objective.target() {
        TargetSpec::Unitary(t) => {
            let z = overlap_trace(&t.adjoint(), wn);
            let scale = z.conj() * C64::from(-2.0 * w0 / (d * d) as f64);
            let tw = t.adjoint() * wn;
            for j in 0..n {
                let c = &prop.cumulative[j] * &tw * prop.cumulative[j + 1].adjoint();
                e_u[j] += c.transpose() * scale;
            }
        }
        TargetSpec::State { initial, target } => {
            let tail = initial * wn.adjoint() * target * wn;
            for j in 0..n {
                let c = &prop.cumulative[j] * &tail * prop.cumulative[j + 1].adjoint();
                e_u[j] += c.transpose() * C64::from(-2.0 * w0);
            }
        }
    }

    if let (Some((pass, g)), true) = (&eval.pass, wr > 0.0) {
        let tf = prop.duration();
        let scale = 2.0 * wr / (d as f64 * tf);
        let d2 = d * d;
        let lifts: Vec<CMatrix> = prop.segments.iter().map(|s| conjugation_lift(&s.unitary)).collect();
        // suffix[j] = Σ_{i>j} L(U_{j+1})…L(U_{i−1}) S_i
        let mut suffix = vec![CMatrix::zeros(d2, d2); n];
        for j in (1..n).rev() {
            suffix[j - 1] = &pass.segments[j].superop + &lifts[j] * &suffix[j];
        }
        let quad = pass.quadrature;
        let per_segment: Vec<(CMatrix, CMatrix)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let a = pass.prefix_lifts[j].adjoint() * g;
                // superoperator part: Re Σ_ac X_ac Y_ac with X = Q†dHQ
                let seg = &pass.segments[j];
                let at = seg.basis.adjoint() * &a * &seg.basis;
                let om = &seg.omegas;
                let mut y = CMatrix::zeros(d, d);
                for aa in 0..d {
                    for bb in 0..d {
                        let r = aa * d + bb;
                        for cc in 0..d {
                            let s1 = cc * d + bb;
                            y[(aa, cc)] += at[(r, s1)].conj() * quad.divided_difference(om[r], om[s1], dt);
                            let s2 = aa * d + cc;
                            y[(cc, bb)] -= at[(r, s2)].conj() * quad.divided_difference(om[r], om[s2], dt);
                        }
                    }
                }
                let q = &prop.segments[j].eigen.vectors;
                let zj = q * y.transpose() * q.adjoint() * C64::from(scale);
                let ej = lift_cotangent(&(&a * suffix[j].adjoint()), &prop.segments[j].unitary)
                    * C64::from(scale);
                (zj, ej)
            })
            .collect();
        for (j, (zj, ej)) in per_segment.into_iter().enumerate() {
            z_h[j] += zj;
            e_u[j] += ej;
        }
    }

    // Pull E back through dU = Q (L ∘ (Q† dH Q)) Q†.
    let mut values = vec![0.0; pulse.n_params()];
    let channels = objective.model().n_channels();
    for j in 0..n {
        let seg = &prop.segments[j];
        let q = &seg.eigen.vectors;
        let ev = &seg.eigen.values;
        let mut et = q.adjoint() * e_u[j].transpose() * q;
        for a in 0..d {
            for b in 0..d {
                et[(a, b)] *= exp_divided_difference(ev[b], ev[a], dt);
            }
        }
        let zj = q * et * q.adjoint() + &z_h[j];
        for c in 0..channels {
            let dh = objective.model().hamiltonian_derivative(pulse.row(j), c)?;
            values[j * channels + c] = overlap_trace(&zj, &dh).re;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective gradient".into()));
    }
    Ok((
        eval.value,
        Gradient {
            values,
            method: GradientMethod::Exact,
            step: None,
        },
    ))
}

/// Gradient of `J_U = (‖M₀‖² − 1) / d` with `M₀ = (1/N) Σ_{n<N} L(U(t_n, 0))`:
/// `∂_k ‖M₀‖² = (4/N²) Re Tr(D_k Y_k)` with `D_k = W_{k+1}† ∂U_k W_k` and
/// `Y_k = Σ_{n ≤ k < m} conj(Tr W_m W_n†) W_n† W_m`.
pub fn grad_ju_analytic(
    model: &ControlModel,
    pulse: &Pulse,
    basis: &OperatorBasis,
    excluded: &BTreeSet<usize>,
    mode: DerivativeMode,
) -> Result<Gradient> {
    check_dim(model.dim(), basis.dim())?;
    if excluded.iter().copied().collect::<Vec<_>>() != [0] {
        return Err(Error::Unsupported(format!(
            "analytic gradient covers η = {{0}} only (got {excluded:?}); use finite differences"
        )));
    }
    if !basis.is_complete() {
        return Err(Error::Unsupported("analytic gradient needs a complete basis".into()));
    }
    let prop = propagate_segments(model, pulse)?;
    let n = prop.segments.len();
    let d = model.dim();
    let w = &prop.cumulative;
    let t: Vec<Vec<C64>> = (0..n)
        .map(|m| (0..n).map(|k| overlap_trace(&w[m], &w[k].adjoint())).collect())
        .collect();
    // pair (n, m), n < m, contributes to segments n..m−1
    let mut diff = vec![CMatrix::zeros(d, d); n + 1];
    for nn in 0..n {
        for m in nn + 1..n {
            let term = w[nn].adjoint() * &w[m] * t[m][nn].conj();
            diff[nn] += &term;
            diff[m] -= term;
        }
    }
    let mut y = CMatrix::zeros(d, d);
    let channels = model.n_channels();
    let mut values = vec![0.0; pulse.n_params()];
    let scale = 4.0 / ((n * n) as f64 * d as f64);
    for k in 0..n {
        y += &diff[k];
        for c in 0..channels {
            let du = match mode {
                DerivativeMode::Exact => exp_frechet(
                    &prop.segments[k].eigen,
                    &model.hamiltonian_derivative(pulse.row(k), c)?,
                    prop.dt,
                ),
                DerivativeMode::ShortTime => {
                    let dh = model.hamiltonian_derivative(pulse.row(k), c)?;
                    (dh * &prop.segments[k].unitary) * (-I * prop.dt)
                }
            };
            let dk = w[k + 1].adjoint() * du * &w[k];
            values[k * channels + c] = scale * overlap_trace(&dk, &y).re;
        }
    }
    Ok(Gradient {
        values,
        method: GradientMethod::Analytic,
        step: None,
    })
}
