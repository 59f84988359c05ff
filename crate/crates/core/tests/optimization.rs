// SPDX-License-Identifier: Apache-2.0

//! Multistart behaviour of the optimizer across thread counts.

use urc_core::functionals::{Objective, Robustness};
use urc_core::models::{fixture_targets, pauli_basis, single_qubit_model};
use urc_core::optimize::{optimize_pulse, OptimizeOptions};

fn objective() -> Objective {
    let target = fixture_targets().unwrap()["single_qubit_z"].clone();
    let rob = Robustness::universal(pauli_basis(1).unwrap(), [0]);
    Objective::new(single_qubit_model(0.5).unwrap(), target, rob, 1.0, 12, 2.0).unwrap()
}

fn options(seed: u64) -> OptimizeOptions {
    OptimizeOptions {
        n_starts: 5,
        max_iterations: 200,
        seed,
        ..Default::default()
    }
}

#[test]
fn best_start_dominates_every_start() {
    let res = optimize_pulse(&objective(), &options(3)).unwrap();
    for s in &res.starts {
        if let Some(v) = &s.value {
            assert!(res.value.total <= v.total, "start {} beats the reported best", s.index);
        }
    }
    assert_eq!(res.starts.len(), 5);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| optimize_pulse(&objective(), &options(11)).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.best_pulse.params(), b.best_pulse.params());
    assert_eq!(a.value, b.value);
    assert_eq!(a.best_start, b.best_start);
}

#[test]
fn different_seeds_give_different_starts() {
    let a = optimize_pulse(&objective(), &options(1)).unwrap();
    let b = optimize_pulse(&objective(), &options(2)).unwrap();
    assert_ne!(a.starts[0].seed, b.starts[0].seed);
}
