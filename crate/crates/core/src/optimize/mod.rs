// SPDX-License-Identifier: Apache-2.0

//! Multistart quasi-Newton pulse optimization and minimal-control-time scans.

pub mod bfgs;
pub mod experiments;

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{evaluate, FunctionalValue, Objective};
use crate::grad::{grad_finite_difference, objective_gradient};
use crate::models::{Channel, Pulse};

pub use bfgs::{BfgsOptions, BfgsStatus};

/// Success threshold on the total functional.
pub const DEFAULT_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Exact structured gradient of the full objective.
    AnalyticWhenAvailable,
    /// Central differences with step `h`.
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Phases uniform on `[0, 2π)`, amplitudes `N(0, rate²)` with the
    /// model's drift scale as `rate`.
    Random,
    /// Every start begins from these parameters.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub max_iterations: usize,
    pub gradient: GradientMode,
    pub ftol: f64,
    pub gtol: f64,
    pub threshold: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub initial_guess: InitialGuess,
    /// Stop a start once its total drops below this value.
    pub stop_below: Option<f64>,
    /// Skip the remaining starts once a batch has produced a success.
    /// Batches have fixed size, so results do not depend on thread timing.
    pub early_exit: bool,
    pub batch_size: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient: GradientMode::AnalyticWhenAvailable,
            ftol: 1e-12,
            gtol: 1e-9,
            threshold: DEFAULT_THRESHOLD,
            n_starts: 10,
            seed: 0,
            initial_guess: InitialGuess::Random,
            stop_below: None,
            early_exit: false,
            batch_size: 4,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(positive(self.ftol) && positive(self.gtol) && positive(self.threshold)) {
            return Err(Error::Config("tolerances and threshold must be positive".into()));
        }
        if self.n_starts == 0 || self.batch_size == 0 {
            return Err(Error::Config("n_starts and batch_size must be ≥ 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be ≥ 1".into()));
        }
        if let GradientMode::FiniteDifference { step } = self.gradient {
            if !positive(step) {
                return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartStatus {
    Converged(BfgsStatus),
    /// Discarded after a non-finite or invalid evaluation.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct StartRecord {
    pub index: usize,
    pub seed: u64,
    pub status: StartStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// `(iteration, total)` per accepted step.
    pub trace: Vec<(usize, f64)>,
    pub value: Option<FunctionalValue>,
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best_pulse: Pulse,
    pub value: FunctionalValue,
    pub best_start: usize,
    pub starts: Vec<StartRecord>,
    pub success: bool,
    pub threshold: f64,
    pub seed: u64,
    pub wall_time: Duration,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG stream for `(master, start, grid point)`.
pub fn derive_seed(master: u64, start: u64, grid: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ start) ^ grid.rotate_left(32))
}

/// Random initial parameters for `objective`, row-major by segment.
pub fn initial_params(objective: &Objective, seed: u64) -> Result<Vec<f64>> {
    let model = objective.model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, model.rate())
        .map_err(|e| Error::Config(format!("amplitude distribution: {e}")))?;
    let mut out = Vec::with_capacity(objective.n_params());
    for _ in 0..objective.segments() {
        for ch in model.channels() {
            out.push(match ch {
                Channel::Phase { .. } => rng.random_range(0.0..TAU),
                Channel::Amplitude { .. } => normal.sample(&mut rng),
            });
        }
    }
    Ok(out)
}

fn value_and_gradient(objective: &Objective, mode: GradientMode, params: &[f64]) -> Result<(FunctionalValue, Vec<f64>)> {
    let pulse = objective.pulse(params)?;
    match mode {
        GradientMode::AnalyticWhenAvailable => {
            let (v, g) = objective_gradient(objective, &pulse)?;
            Ok((v, g.values))
        }
        GradientMode::FiniteDifference { step } => {
            let v = evaluate(objective, &pulse)?;
            let g = grad_finite_difference(|p| Ok(evaluate(objective, &objective.pulse(p)?)?.total), params, step)?;
            Ok((v, g.values))
        }
    }
}

fn finite_or_err(v: FunctionalValue) -> Result<FunctionalValue> {
    if v.total.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("functional value {}", v.total)))
    }
}

fn run_start(objective: &Objective, options: &OptimizeOptions, index: usize, grid: u64) -> StartRecord {
    let seed = derive_seed(options.seed, index as u64, grid);
    let failed = |msg: String| {
        log::warn!("start {index} discarded: {msg}");
        StartRecord {
            index,
            seed,
            status: StartStatus::Failed(msg),
            iterations: 0,
            evaluations: 0,
            trace: Vec::new(),
            value: None,
            params: None,
        }
    };
    let x0 = match &options.initial_guess {
        InitialGuess::Random => match initial_params(objective, seed) {
            Ok(x) => x,
            Err(e) => return failed(e.to_string()),
        },
        InitialGuess::Fixed(x) => x.clone(),
    };
    let bfgs_opts = BfgsOptions {
        max_iterations: options.max_iterations,
        gtol: options.gtol,
        ftol: options.ftol,
        stop_below: options.stop_below,
    };
    let outcome = bfgs::minimize(
        |p| {
            let (v, g) = value_and_gradient(objective, options.gradient, p)?;
            let v = finite_or_err(v)?;
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("gradient".into()));
            }
            Ok((v.total, g))
        },
        &x0,
        &bfgs_opts,
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return failed(e.to_string()),
    };
    let value = match objective.pulse(&outcome.x).and_then(|p| evaluate(objective, &p)) {
        Ok(v) => v,
        Err(e) => return failed(e.to_string()),
    };
    StartRecord {
        index,
        seed,
        status: StartStatus::Converged(outcome.status),
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        trace: outcome.trace,
        value: Some(value),
        params: Some(outcome.x),
    }
}

fn optimize_at(objective: &Objective, options: &OptimizeOptions, grid: u64) -> Result<OptimizationResult> {
    options.validate()?;
    if let InitialGuess::Fixed(x) = &options.initial_guess {
        if x.len() != objective.n_params() {
            return Err(Error::Dimension {
                expected: objective.n_params(),
                found: x.len(),
            });
        }
    }
    let clock = Instant::now();
    let mut starts: Vec<StartRecord> = Vec::with_capacity(options.n_starts);
    let batch = if options.early_exit { options.batch_size } else { options.n_starts };
    let mut next = 0;
    while next < options.n_starts {
        let end = (next + batch).min(options.n_starts);
        let records: Vec<StartRecord> = (next..end)
            .into_par_iter()
            .map(|i| run_start(objective, options, i, grid))
            .collect();
        starts.extend(records);
        next = end;
        let hit = starts
            .iter()
            .any(|s| s.value.is_some_and(|v| v.total < options.threshold));
        if options.early_exit && hit {
            break;
        }
    }
    // first index wins ties, so the choice is independent of scheduling
    let (best_start, best) = starts
        .iter()
        .filter_map(|s| s.value.map(|v| (s.index, v)))
        .fold(None::<(usize, FunctionalValue)>, |acc, (i, v)| match acc {
            Some((_, b)) if b.total <= v.total => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::NonFinite("every start was discarded".into()))?;
    let params = starts[best_start].params.as_ref().expect("successful start has parameters");
    Ok(OptimizationResult {
        best_pulse: objective.pulse(params)?,
        value: best,
        best_start,
        success: best.total < options.threshold,
        threshold: options.threshold,
        seed: options.seed,
        wall_time: clock.elapsed(),
        starts,
    })
}

/// Multistart BFGS on `objective`; deterministic for a given seed.
pub fn optimize_pulse(objective: &Objective, options: &OptimizeOptions) -> Result<OptimizationResult> {
    optimize_at(objective, options, 0)
}

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub index: usize,
    pub duration: f64,
    pub value: FunctionalValue,
    pub success: bool,
    pub result: OptimizationResult,
}

#[derive(Debug, Clone)]
pub struct MctScanResult {
    /// Total times, strictly increasing.
    pub grid: Vec<f64>,
    pub points: Vec<ScanPoint>,
    /// Smallest grid time with a successful optimization.
    pub t_mct: Option<f64>,
    /// Largest spacing between neighbouring grid points.
    pub resolution: f64,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty time grid".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("grid times must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Optimization of `template` at grid point `index` of a scan.
pub fn scan_point(template: &Objective, grid: &[f64], index: usize, options: &OptimizeOptions) -> Result<ScanPoint> {
    validate_grid(grid)?;
    let duration = *grid
        .get(index)
        .ok_or_else(|| Error::Config(format!("grid index {index} out of range")))?;
    let objective = template.with_duration(duration)?;
    let result = optimize_at(&objective, options, index as u64 + 1)?;
    Ok(ScanPoint {
        index,
        duration,
        value: result.value,
        success: result.success,
        result,
    })
}

/// Assembles a scan from per-point results ordered by grid index.
pub fn collect_scan(grid: &[f64], points: Vec<ScanPoint>) -> Result<MctScanResult> {
    validate_grid(grid)?;
    if points.len() != grid.len() || points.iter().enumerate().any(|(i, p)| p.index != i) {
        return Err(Error::Config("scan points do not cover the grid in order".into()));
    }
    let t_mct = points.iter().find(|p| p.success).map(|p| p.duration);
    let resolution = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(MctScanResult {
        grid: grid.to_vec(),
        points,
        t_mct,
        resolution,
    })
}

/// Fresh multistart optimization at every grid time with the segment count
/// fixed, so `Δt` scales with `t_f`.
pub fn mct_scan(template: &Objective, grid: &[f64], options: &OptimizeOptions) -> Result<MctScanResult> {
    validate_grid(grid)?;
    let points = (0..grid.len())
        .map(|i| scan_point(template, grid, i, options))
        .collect::<Result<Vec<_>>>()?;
    collect_scan(grid, points)
}
