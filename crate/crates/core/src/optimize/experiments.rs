// SPDX-License-Identifier: Apache-2.0

//! Named experiment configurations.
//!
//! Times are dimensionless: `Ω_R t_f / 2π` for the single qubit, where
//! `Ω_R` is the Rabi frequency (twice the coefficient of the Pauli
//! operators), and `β t_f / 2π` for the collective-spin models.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::functionals::{Objective, Robustness};
use crate::models::{pauli_basis, symmetric_subspace_basis, OperatorBasis};
use crate::models::fixture_targets;
use crate::models::{collective_spin_model, single_qubit_model, spin_matrices, ControlModel, TargetSpec};
use crate::qcore::{sigma_x, sigma_y, sigma_z, CMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Phase-controlled qubit with Rabi frequency `rabi`.
    SingleQubit { rabi: f64 },
    /// `Ω_x S_x + Ω_y S_y + β S_z²` on the symmetric subspace.
    CollectiveSpin { beta: f64, n_qubits: usize },
}

impl ModelSpec {
    pub fn build(&self) -> Result<ControlModel> {
        match *self {
            ModelSpec::SingleQubit { rabi } => single_qubit_model(rabi / 2.0),
            ModelSpec::CollectiveSpin { beta, n_qubits } => collective_spin_model(beta, n_qubits),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::SingleQubit { .. } => 2,
            ModelSpec::CollectiveSpin { n_qubits, .. } => n_qubits + 1,
        }
    }

    /// Physical time per dimensionless time unit.
    pub fn time_unit(&self) -> f64 {
        match *self {
            ModelSpec::SingleQubit { rabi } => TAU / rabi,
            ModelSpec::CollectiveSpin { beta, .. } => TAU / beta,
        }
    }

    /// Class-labelled basis used for universal robustness: Pauli weight for
    /// the qubit, body order within the symmetric subspace otherwise.
    pub fn basis(&self) -> Result<OperatorBasis> {
        match *self {
            ModelSpec::SingleQubit { .. } => pauli_basis(1),
            ModelSpec::CollectiveSpin { n_qubits, .. } => symmetric_subspace_basis(n_qubits),
        }
    }

    /// Named perturbation operators: `x`, `y`, `z` are the Pauli matrices on
    /// the qubit and `S_x`, `S_y`, `S_z` on collective models; `xx`, `yy`,
    /// `zz` are their squares.
    pub fn operator(&self, name: &str) -> Result<CMatrix> {
        let (x, y, z) = match *self {
            ModelSpec::SingleQubit { .. } => (sigma_x(), sigma_y(), sigma_z()),
            ModelSpec::CollectiveSpin { n_qubits, .. } => spin_matrices(n_qubits),
        };
        Ok(match name {
            "x" => x,
            "y" => y,
            "z" => z,
            "xx" => &x * &x,
            "yy" => &y * &y,
            "zz" => &z * &z,
            other => return Err(Error::Config(format!("unknown operator name '{other}'"))),
        })
    }
}

pub const OPERATOR_NAMES: [&str; 6] = ["x", "y", "z", "xx", "yy", "zz"];

#[derive(Debug, Clone, PartialEq)]
pub enum TargetRef {
    Fixture(String),
    Inline(TargetSpec),
}

impl TargetRef {
    pub fn resolve(&self) -> Result<TargetSpec> {
        match self {
            TargetRef::Fixture(name) => fixture_targets()?
                .remove(name.as_str())
                .ok_or_else(|| Error::Config(format!("unknown fixture '{name}'"))),
            TargetRef::Inline(t) => Ok(t.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobustnessSpec {
    None,
    /// Known perturbation, by operator name.
    KnownV(String),
    /// Robust to every basis class outside `excluded`.
    Universal { excluded: BTreeSet<usize> },
}

/// A complete, buildable optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub group: String,
    pub method: String,
    pub model: ModelSpec,
    pub target: TargetRef,
    pub robustness: RobustnessSpec,
    pub weight: f64,
    pub segments: usize,
    /// Dimensionless total time.
    pub time: f64,
    /// Operator names probed by verification sweeps.
    pub perturbations: Vec<String>,
    /// Dimensionless scan grid for minimal-control-time presets.
    pub scan_grid: Option<Vec<f64>>,
}

impl ExperimentSpec {
    pub fn name(&self) -> String {
        format!("{}.{}", self.group, self.method)
    }

    pub fn duration(&self) -> f64 {
        self.time * self.model.time_unit()
    }

    pub fn robustness(&self) -> Result<Robustness> {
        Ok(match &self.robustness {
            RobustnessSpec::None => Robustness::None,
            RobustnessSpec::KnownV(name) => Robustness::KnownV(self.model.operator(name)?),
            RobustnessSpec::Universal { excluded } => Robustness::universal(self.model.basis()?, excluded.iter().copied()),
        })
    }

    pub fn objective(&self) -> Result<Objective> {
        Objective::new(
            self.model.build()?,
            self.target.resolve()?,
            self.robustness()?,
            self.weight,
            self.segments,
            self.duration(),
        )
    }

    /// Physical scan grid, if this is a scan preset.
    pub fn physical_grid(&self) -> Option<Vec<f64>> {
        let unit = self.model.time_unit();
        self.scan_grid.as_ref().map(|g| g.iter().map(|t| t * unit).collect())
    }

    /// Perturbation operators with their names.
    pub fn perturbation_operators(&self) -> Result<Vec<(String, CMatrix)>> {
        self.perturbations
            .iter()
            .map(|n| Ok((n.clone(), self.model.operator(n)?)))
            .collect()
    }
}

/// `{start, start + step, …}` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Dimensionless scan grid for the single-qubit minimal-control-time study.
pub fn default_mct_grid() -> Vec<f64> {
    uniform_grid(0.5, 4.0, 0.25)
}

/// Weights of the weight-dependence study.
pub const WEIGHT_STUDY: [f64; 3] = [0.1, 1.0, 10.0];

/// Settings chosen for the four-qubit state preparation, which has no
/// reference duration, segment count or weight.
pub const DICKE_TIME: f64 = 5.0;
pub const DICKE_SEGMENTS: usize = 50;
pub const DICKE_WEIGHT: f64 = 0.1;

fn set(items: &[usize]) -> BTreeSet<usize> {
    items.iter().copied().collect()
}

fn names(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn spec(
    group: &str,
    method: &str,
    model: &ModelSpec,
    target: &str,
    robustness: RobustnessSpec,
    weight: f64,
    segments: usize,
    time: f64,
    perturbations: &[&str],
) -> ExperimentSpec {
    ExperimentSpec {
        group: group.into(),
        method: method.into(),
        model: model.clone(),
        target: TargetRef::Fixture(target.into()),
        robustness,
        weight,
        segments,
        time,
        perturbations: names(perturbations),
        scan_grid: None,
    }
}

fn weight_label(w: f64) -> String {
    format!("w{w}")
}

/// Every named preset, ordered by group then method.
pub fn preset_experiments() -> Vec<ExperimentSpec> {
    use RobustnessSpec as R;
    let qubit = ModelSpec::SingleQubit { rabi: 1.0 };
    let pair = ModelSpec::CollectiveSpin { beta: 1.0, n_qubits: 2 };
    let four = ModelSpec::CollectiveSpin { beta: 1.0, n_qubits: 4 };
    let qubit_ops = ["x", "y", "z"];
    let pair_ops = ["x", "z", "xx"];
    let mut out = Vec::new();

    for (method, rob) in [
        ("target_only", R::None),
        ("robust_sz", R::KnownV("z".into())),
        ("urc", R::Universal { excluded: set(&[0]) }),
    ] {
        let w = if rob == R::None { 0.0 } else { 1.0 };
        out.push(spec("fig1", method, &qubit, "single_qubit_z", rob, w, 40, 3.5, &qubit_ops));
    }

    let pair_methods = || {
        [
            ("target_only", R::None),
            ("robust_sx", R::KnownV("x".into())),
            ("robust_1body", R::Universal { excluded: set(&[0, 2]) }),
            ("urc", R::Universal { excluded: set(&[0]) }),
        ]
    };
    for (method, rob) in pair_methods() {
        let w = if rob == R::None { 0.0 } else { 0.1 };
        out.push(spec("fig2", method, &pair, "two_qubit_random", rob, w, 50, 5.0, &pair_ops));
    }

    for (method, rob, time) in [
        ("target_only", R::None, 1.1),
        ("robust_sz", R::KnownV("z".into()), 2.1),
        ("urc", R::Universal { excluded: set(&[0]) }, 3.5),
    ] {
        let w = if rob == R::None { 0.0 } else { 1.0 };
        out.push(spec("supp_timescales", method, &qubit, "single_qubit_z", rob, w, 40, time, &qubit_ops));
    }

    for (method, rob) in [
        ("target_only", R::None),
        ("robust_sx", R::KnownV("x".into())),
        ("urc_1b", R::Universal { excluded: set(&[0, 2, 3, 4]) }),
        ("urc_2b", R::Universal { excluded: set(&[0, 1, 3, 4]) }),
    ] {
        let w = if rob == R::None { 0.0 } else { DICKE_WEIGHT };
        out.push(spec(
            "supp_dicke",
            method,
            &four,
            "dicke4",
            rob,
            w,
            DICKE_SEGMENTS,
            DICKE_TIME,
            &pair_ops,
        ));
    }

    for (method, rob) in pair_methods() {
        let w = if rob == R::None { 0.0 } else { 0.1 };
        out.push(spec("supp_ms", method, &pair, "ms_gate", rob, w, 50, 5.0, &pair_ops));
    }

    for (prefix, excluded) in [("urc", set(&[0])), ("robust_1body", set(&[0, 2]))] {
        for w in WEIGHT_STUDY {
            out.push(spec(
                "supp_weights",
                &format!("{prefix}_{}", weight_label(w)),
                &pair,
                "two_qubit_random",
                R::Universal {
                    excluded: excluded.clone(),
                },
                w,
                50,
                5.0,
                &["z"],
            ));
        }
    }

    for (method, rob) in [
        ("target_only", R::None),
        ("robust_sz", R::KnownV("z".into())),
        ("urc", R::Universal { excluded: set(&[0]) }),
    ] {
        let w = if rob == R::None { 0.0 } else { 1.0 };
        let mut s = spec("mct_single_qubit", method, &qubit, "single_qubit_z", rob, w, 40, 4.0, &qubit_ops);
        s.scan_grid = Some(default_mct_grid());
        out.push(s);
    }
    out
}

/// Preset by `group.method` name.
pub fn find_experiment(name: &str) -> Result<ExperimentSpec> {
    preset_experiments()
        .into_iter()
        .find(|e| e.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))
}
