// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::models::{ControlModel, Pulse};
use crate::optimize::derive_seed;
use crate::qcore::{ensure_hermitian, ensure_pure_state, identity, overlap_trace, CMatrix, HermitianEigen, C64};
use crate::superop::NoiseCorrelation;

pub const DEFAULT_NOISE_SUBSTEPS: usize = 10;
pub const MIN_TRAJECTORIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub mean_fidelity: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub trajectories: usize,
    pub substeps: usize,
}

impl NoiseEstimate {
    pub fn mean_infidelity(&self) -> f64 {
        1.0 - self.mean_fidelity
    }
}

/// Piecewise-constant noise samples on `n` steps of length `delta`.
fn sample_noise(correlation: &NoiseCorrelation, n: usize, delta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut gauss = || -> f64 { StandardNormal.sample(rng) };
    match *correlation {
        NoiseCorrelation::White { strength } => {
            let sd = (strength / delta).sqrt();
            (0..n).map(|_| sd * gauss()).collect()
        }
        NoiseCorrelation::Exponential { tau_c, variance } => {
            // stationary AR(1): Cov(ξ_i, ξ_j) = variance · a^|i−j|
            let a = (-delta / tau_c).exp();
            let innovation = (variance * (1.0 - a * a)).sqrt();
            let mut xi = variance.sqrt() * gauss();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(xi);
                xi = a * xi + innovation * gauss();
            }
            out
        }
        NoiseCorrelation::Custom(_) => unreachable!("rejected before sampling"),
    }
}

/// Mean state fidelity `Tr(ρ_ξ ρ₀)` under `H₀(t) + λ ξ(t) V`, with `ξ`
/// piecewise constant on `substeps` sub-intervals per segment.
#[allow(clippy::too_many_arguments)]
pub fn noise_monte_carlo(
    model: &ControlModel,
    pulse: &Pulse,
    sigma: &CMatrix,
    v: &CMatrix,
    correlation: &NoiseCorrelation,
    lambda: f64,
    n_traj: usize,
    seed: u64,
    substeps: usize,
) -> Result<NoiseEstimate> {
    correlation.validate()?;
    if matches!(correlation, NoiseCorrelation::Custom(_)) {
        return Err(Error::Unsupported("Monte-Carlo sampling needs a white or exponential correlation".into()));
    }
    if n_traj < MIN_TRAJECTORIES {
        return Err(Error::Config(format!("need at least {MIN_TRAJECTORIES} trajectories, got {n_traj}")));
    }
    if substeps == 0 {
        return Err(Error::Config("substeps must be at least 1".into()));
    }
    if !lambda.is_finite() {
        return Err(Error::Input(format!("non-finite noise strength {lambda}")));
    }
    check_dim(model.dim(), sigma.nrows())?;
    check_dim(model.dim(), v.nrows())?;
    ensure_pure_state(sigma, "σ")?;
    ensure_hermitian(v, "perturbation V")?;
    model.check_pulse(pulse)?;

    let hams: Vec<CMatrix> = (0..pulse.segments()).map(|k| model.hamiltonian(pulse.row(k))).collect();
    let delta = pulse.dt() / substeps as f64;
    let steps = hams.len() * substeps;
    let ideal = hams
        .iter()
        .fold(identity(model.dim()), |u, h| HermitianEigen::new_unchecked(h).propagator(pulse.dt()) * u);
    let rho0 = &ideal * sigma * ideal.adjoint();

    let fidelities: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64, 0));
            let xi = sample_noise(correlation, steps, delta, &mut rng);
            let mut u = identity(model.dim());
            for (i, x) in xi.iter().enumerate() {
                let h = &hams[i / substeps] + v * C64::from(lambda * x);
                u = HermitianEigen::new_unchecked(&h).propagator(delta) * u;
            }
            let rho = &u * sigma * u.adjoint();
            overlap_trace(&rho, &rho0).re.clamp(0.0, 1.0)
        })
        .collect();
    if fidelities.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("trajectory fidelity".into()));
    }
    let n = n_traj as f64;
    let mean = fidelities.iter().sum::<f64>() / n;
    let var = fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(NoiseEstimate {
        mean_fidelity: mean,
        std_error: (var / n).sqrt(),
        trajectories: n_traj,
        substeps,
    })
}
