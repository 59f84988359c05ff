// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::qcore::{frobenius_sq, hs_inner, identity, max_abs, CMatrix, C64, ONE, ZERO};

/// Largest Pauli basis built by default (`4^6` elements).
pub const DEFAULT_BASIS_CAP: usize = 4096;

const ORTHONORMAL_TOL: f64 = 1e-10;
const NULL_TOL: f64 = 1e-8;

/// Orthonormal Hermitian operator basis with a class label per element.
///
/// Element 0 is always `I/√d` with class 0. The classes partition the basis
/// into the covering used by robustness projectors (0 = identity,
/// 1 = one-body, 2 = two-body, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBasis {
    dim: usize,
    elements: Vec<CMatrix>,
    classes: Vec<usize>,
}

impl OperatorBasis {
    pub fn new(elements: Vec<CMatrix>, classes: Vec<usize>) -> Result<Self> {
        if elements.is_empty() || elements.len() != classes.len() {
            return Err(Error::Config(
                "basis needs one class label per element".into(),
            ));
        }
        let dim = elements[0].nrows();
        let lambda0 = identity(dim) * C64::from(1.0 / (dim as f64).sqrt());
        if classes[0] != 0 || max_abs(&(&elements[0] - lambda0)) > 1e-14 {
            return Err(Error::Invariant(
                "basis element 0 must be I/√d with class 0".into(),
            ));
        }
        if classes[1..].contains(&0) {
            return Err(Error::Invariant(
                "class 0 is reserved for the identity element".into(),
            ));
        }
        for (i, a) in elements.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: a.nrows(),
                });
            }
            for (j, b) in elements.iter().enumerate().skip(i) {
                let expected = if i == j { ONE } else { ZERO };
                let g = hs_inner(a, b)?;
                if (g - expected).norm() > ORTHONORMAL_TOL {
                    return Err(Error::Invariant(format!(
                        "basis elements {i}, {j} not orthonormal (⟨⟨Λ|Λ'⟩⟩ = {g})"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            elements,
            classes,
        })
    }

    /// Hilbert-space dimension `d` of the operators.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.elements.len() == self.dim * self.dim
    }

    pub fn element(&self, j: usize) -> &CMatrix {
        &self.elements[j]
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn class_of(&self, j: usize) -> usize {
        self.classes[j]
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.classes.iter().copied().collect()
    }

    pub fn count_in(&self, class: usize) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Elements whose class is in `classes`.
    pub fn members<'a>(
        &'a self,
        classes: &'a BTreeSet<usize>,
    ) -> impl Iterator<Item = &'a CMatrix> + 'a {
        self.elements
            .iter()
            .zip(&self.classes)
            .filter(move |(_, c)| classes.contains(c))
            .map(|(e, _)| e)
    }
}

fn single_pauli(code: usize) -> CMatrix {
    match code {
        0 => identity(2),
        1 => crate::qcore::sigma_x(),
        2 => crate::qcore::sigma_y(),
        _ => crate::qcore::sigma_z(),
    }
}

/// Base-4 digits of a Pauli-string index, qubit 0 most significant.
fn pauli_digits(mut index: usize, n: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    for q in (0..n).rev() {
        digits[q] = index % 4;
        index /= 4;
    }
    digits
}

pub fn pauli_basis(n_qubits: usize) -> Result<OperatorBasis> {
    pauli_basis_capped(n_qubits, DEFAULT_BASIS_CAP)
}

/// Normalized Pauli strings `P/√(2^N)`, class = Pauli weight.
pub fn pauli_basis_capped(n_qubits: usize, cap: usize) -> Result<OperatorBasis> {
    if n_qubits == 0 {
        return Err(Error::Config("Pauli basis needs at least one qubit".into()));
    }
    let count = 4usize
        .checked_pow(n_qubits as u32)
        .filter(|&c| c <= cap)
        .ok_or_else(|| {
            Error::Config(format!(
                "Pauli basis for {n_qubits} qubits exceeds the size cap of {cap} elements"
            ))
        })?;
    let d = 1usize << n_qubits;
    let norm = C64::from(1.0 / (d as f64).sqrt());
    let mut elements = Vec::with_capacity(count);
    let mut classes = Vec::with_capacity(count);
    for idx in 0..count {
        let digits = pauli_digits(idx, n_qubits);
        let mut m = CMatrix::from_element(1, 1, ONE);
        for &code in &digits {
            m = m.kronecker(&single_pauli(code));
        }
        elements.push(m * norm);
        classes.push(digits.iter().filter(|&&c| c != 0).count());
    }
    OperatorBasis::new(elements, classes)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `B† P B` for the Pauli string with the given digits, where `B` maps the
/// collective basis (index = number of |1⟩ factors) into the qubit register.
fn project_to_symmetric(digits: &[usize]) -> CMatrix {
    let n = digits.len();
    let mut out = CMatrix::zeros(n + 1, n + 1);
    let mut flip = 0usize;
    for (q, &code) in digits.iter().enumerate() {
        if code == 1 || code == 2 {
            flip |= 1 << (n - 1 - q);
        }
    }
    for b in 0usize..(1 << n) {
        let mut phase = ONE;
        for (q, &code) in digits.iter().enumerate() {
            let bit = (b >> (n - 1 - q)) & 1;
            match code {
                // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                2 => phase *= if bit == 0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) },
                3 if bit == 1 => phase = -phase,
                _ => {}
            }
        }
        let col = b.count_ones() as usize;
        let row = (b ^ flip).count_ones() as usize;
        let w = 1.0 / (binomial(n, row) * binomial(n, col)).sqrt();
        out[(row, col)] += phase * C64::from(w);
    }
    out
}

/// Orthonormal basis of the `(N+1)²`-dimensional operator space on the
/// symmetric subspace, classed by the Pauli weight it descends from.
///
/// Each weight-k Pauli string is projected into the symmetric subspace and
/// Gram–Schmidt-orthonormalized against everything accepted so far (lower
/// classes first); residuals below `10⁻⁸` are dropped.
pub fn symmetric_subspace_basis(n_qubits: usize) -> Result<OperatorBasis> {
    if n_qubits < 2 {
        return Err(Error::Config(format!(
            "symmetric-subspace basis needs at least 2 qubits, got {n_qubits}"
        )));
    }
    if 4usize.pow(n_qubits as u32) > DEFAULT_BASIS_CAP {
        return Err(Error::Config(format!(
            "symmetric-subspace basis for {n_qubits} qubits exceeds the size cap"
        )));
    }
    let d = n_qubits + 1;
    let mut by_class: Vec<Vec<CMatrix>> = vec![Vec::new(); n_qubits + 1];
    for idx in 0..4usize.pow(n_qubits as u32) {
        let digits = pauli_digits(idx, n_qubits);
        let weight = digits.iter().filter(|&&c| c != 0).count();
        by_class[weight].push(project_to_symmetric(&digits));
    }

    let mut elements: Vec<CMatrix> = Vec::with_capacity(d * d);
    let mut classes = Vec::with_capacity(d * d);
    for (class, candidates) in by_class.into_iter().enumerate() {
        for mut x in candidates {
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for e in &elements {
                    let c = hs_inner(e, &x)?;
                    x -= e * c;
                }
            }
            let norm = frobenius_sq(&x).sqrt();
            if norm < NULL_TOL {
                continue;
            }
            x /= C64::from(norm);
            // the identity direction is real and exact; keep Λ₀ clean
            if class == 0 {
                x = identity(d) * C64::from(1.0 / (d as f64).sqrt());
            }
            elements.push(x);
            classes.push(class);
        }
    }
    if elements.len() != d * d {
        return Err(Error::Invariant(format!(
            "symmetric basis spans {} operators, expected {}",
            elements.len(),
            d * d
        )));
    }
    OperatorBasis::new(elements, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spin_matrices;
    use crate::qcore::{hermiticity_defect, vectorize};

    fn completeness_defect(basis: &OperatorBasis) -> f64 {
        let d2 = basis.dim() * basis.dim();
        let mut acc = CMatrix::zeros(d2, d2);
        for e in basis.elements() {
            let v = vectorize(e);
            acc += &v * v.adjoint();
        }
        max_abs(&(acc - CMatrix::identity(d2, d2)))
    }

    #[test]
    fn single_qubit_pauli_basis() {
        let b = pauli_basis(1).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.classes(), &[0, 1, 1, 1]);
    }

    #[test]
    fn two_qubit_pauli_counts() {
        let b = pauli_basis(2).unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(b.count_in(1), 6);
        assert_eq!(b.count_in(2), 9);
        for i in 0..16 {
            for j in 0..16 {
                let g = hs_inner(b.element(i), b.element(j)).unwrap();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - C64::from(e)).norm() < 1e-12);
            }
        }
        assert!(completeness_defect(&b) < 1e-9);
    }

    #[test]
    fn pauli_cap_enforced() {
        assert!(pauli_basis_capped(3, 16).is_err());
        assert!(pauli_basis(0).is_err());
    }

    #[test]
    fn symmetric_basis_two_qubits() {
        let b = symmetric_subspace_basis(2).unwrap();
        assert_eq!(b.len(), 9);
        assert_eq!(b.count_in(1), 3);
        assert_eq!(b.count_in(2), 5);
        assert!(completeness_defect(&b) < 1e-9);
        let lambda0 = b.element(0);
        for (e, &c) in b.elements().iter().zip(b.classes()) {
            assert!(hermiticity_defect(e) < 1e-12);
            if c == 1 {
                assert!(hs_inner(lambda0, e).unwrap().norm() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_class_one_spans_spin_operators() {
        // Oracle: projector onto span{S_x, S_y, S_z} built from the
        // normalized spin matrices directly.
        let (sx, sy, sz) = spin_matrices(2);
        let oracle: Vec<_> = [sx, sy, sz]
            .into_iter()
            .map(|s| {
                let n = frobenius_sq(&s).sqrt();
                vectorize(&(s / C64::from(n)))
            })
            .collect();
        let b = symmetric_subspace_basis(2).unwrap();
        let mut p_oracle = CMatrix::zeros(9, 9);
        for v in &oracle {
            p_oracle += v * v.adjoint();
        }
        let mut p_basis = CMatrix::zeros(9, 9);
        let one: BTreeSet<usize> = [1].into();
        for e in b.members(&one) {
            let v = vectorize(e);
            p_basis += &v * v.adjoint();
        }
        assert!(max_abs(&(p_oracle - p_basis)) < 1e-12);
    }

    #[test]
    fn symmetric_basis_four_qubits() {
        let b = symmetric_subspace_basis(4).unwrap();
        assert_eq!(b.len(), 25);
        let counts: Vec<usize> = (0..=4).map(|k| b.count_in(k)).collect();
        assert_eq!(counts, vec![1, 3, 5, 7, 9]);
        assert!(completeness_defect(&b) < 1e-9);
    }
}
