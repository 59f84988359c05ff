// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::error::Result;
use crate::models::{dicke_state, spin_matrices, TargetSpec};
use crate::qcore::{expm_skew, polar_unitary, CMatrix, C64};

/// Symmetric two-qubit gate in the basis `{|00⟩, (|01⟩+|10⟩)/√2, |11⟩}`,
/// as printed to 8 digits.
const TWO_QUBIT_RANDOM: [[(f64, f64); 3]; 3] = [
    [
        (0.51762131, 0.11456864),
        (-0.5988566, -0.16086483),
        (-0.57589678, 0.05271048),
    ],
    [
        (-0.22709248, 0.22335233),
        (0.30541094, 0.57529237),
        (-0.6568961, -0.20686492),
    ],
    [
        (-0.75950102, 0.20160146),
        (-0.40091574, -0.17470746),
        (-0.13888378, 0.41469292),
    ],
];

/// The printed digits, before re-unitarization.
pub fn two_qubit_random_raw() -> CMatrix {
    CMatrix::from_fn(3, 3, |i, j| {
        let (re, im) = TWO_QUBIT_RANDOM[i][j];
        C64::new(re, im)
    })
}

/// `exp[-i (π/2)(S_x² − S_x/2)]` on two qubits.
pub fn ms_gate() -> Result<CMatrix> {
    let (sx, _, _) = spin_matrices(2);
    let generator = &sx * &sx - &sx * C64::from(0.5);
    expm_skew(&generator, std::f64::consts::FRAC_PI_2)
}

/// Named targets used by the experiment presets, sorted by name.
pub fn fixture_targets() -> Result<BTreeMap<&'static str, TargetSpec>> {
    let mut out = BTreeMap::new();
    let z = expm_skew(&crate::qcore::sigma_z(), std::f64::consts::FRAC_PI_2)?;
    out.insert("single_qubit_z", TargetSpec::unitary(z)?);
    // 8 printed digits leave ‖U†U − I‖ ≈ 1e-8; the polar factor is the
    // nearest exactly unitary matrix.
    out.insert(
        "two_qubit_random",
        TargetSpec::unitary(polar_unitary(&two_qubit_random_raw())?)?,
    );
    out.insert("ms_gate", TargetSpec::unitary(ms_gate()?)?);
    out.insert(
        "dicke4",
        TargetSpec::state_from_kets(&dicke_state(4, 0)?, &dicke_state(4, 2)?)?,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{max_abs, unitarity_defect, I, ZERO};

    #[test]
    fn fixtures_are_sorted_and_valid() {
        let f = fixture_targets().unwrap();
        let names: Vec<_> = f.keys().copied().collect();
        assert_eq!(names, vec!["dicke4", "ms_gate", "single_qubit_z", "two_qubit_random"]);
    }

    #[test]
    fn single_qubit_z_target() {
        let f = fixture_targets().unwrap();
        let TargetSpec::Unitary(u) = &f["single_qubit_z"] else {
            panic!("unitary expected")
        };
        let expected = CMatrix::from_row_slice(2, 2, &[-I, ZERO, ZERO, I]);
        assert!(max_abs(&(u - expected)) < 1e-15);
    }

    #[test]
    fn ms_gate_unitary() {
        assert!(unitarity_defect(&ms_gate().unwrap()) < 1e-10);
    }

    #[test]
    fn random_target_keeps_printed_digits() {
        let raw = two_qubit_random_raw();
        assert_eq!(raw[(0, 0)], C64::new(0.51762131, 0.11456864));
        let f = fixture_targets().unwrap();
        let TargetSpec::Unitary(u) = &f["two_qubit_random"] else {
            panic!("unitary expected")
        };
        assert!(unitarity_defect(u) < 1e-12);
        assert!(max_abs(&(u - &raw)) < 5e-8);
        assert!((u[(0, 0)] - C64::new(0.51762131, 0.11456864)).norm() < 5e-8);
    }
}
