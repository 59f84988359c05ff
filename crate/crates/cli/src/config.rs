// SPDX-License-Identifier: Apache-2.0

//! TOML experiment configuration.
//!
//! A config either names a preset (`preset = "fig1.urc"`) or spells out the
//! model, target and objective. Either way it is resolved to a fully
//! explicit [`ExperimentConfig`] whose canonical TOML text is stored next to
//! the results and hashed for provenance.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use urc_core::models::TargetSpec;
use urc_core::optimize::experiments::{
    find_experiment, uniform_grid, ExperimentSpec, ModelSpec, RobustnessSpec, TargetRef, OPERATOR_NAMES,
};
use urc_core::optimize::{GradientMode, OptimizeOptions};
use urc_core::qcore::{CMatrix, C64};
use urc_core::superop::NoiseCorrelation;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    SingleQubit { rabi: f64 },
    CollectiveSpin { beta: f64, n_qubits: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub segments: Option<usize>,
    /// Dimensionless total time.
    pub time: Option<f64>,
    /// Explicit dimensionless scan grid.
    pub grid: Option<Vec<f64>>,
    pub scan: Option<ScanConfig>,
}

/// Complex entries are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub fixture: Option<String>,
    /// Row-major unitary.
    pub unitary: Option<Vec<Vec<[f64; 2]>>>,
    /// Initial and target kets of a state-transfer problem.
    pub initial: Option<Vec<[f64; 2]>>,
    pub target: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessKind {
    None,
    KnownV,
    Universal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub robustness: RobustnessKind,
    /// Operator name for `known_v`.
    pub operator: Option<String>,
    /// Tolerated basis classes for `universal`.
    pub excluded: Option<Vec<usize>>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub n_starts: usize,
    pub threshold: f64,
    pub max_iterations: usize,
    pub gradient: GradientKind,
    pub fd_step: f64,
    pub early_exit: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = OptimizeOptions::default();
        Self {
            seed: d.seed,
            n_starts: d.n_starts,
            threshold: d.threshold,
            max_iterations: d.max_iterations,
            gradient: GradientKind::Analytic,
            fd_step: 1e-6,
            early_exit: d.early_exit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    White,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub correlation: CorrelationKind,
    /// White-noise strength `s` in `C(t, t′) = s δ(t − t′)`, in dimensionless time units.
    pub strength: Option<f64>,
    /// Dimensionless correlation time.
    pub tau_c: Option<f64>,
    pub variance: Option<f64>,
    pub operator: String,
    /// Dimensionless noise amplitude.
    pub lambda: f64,
    pub trajectories: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    urc_core::verify::DEFAULT_NOISE_SUBSTEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Dimensionless perturbation strengths; must contain 0.
    pub lambdas: Vec<f64>,
    /// Operator names; empty means the preset's probes.
    pub operators: Vec<String>,
    /// Random traceless directions averaged into one curve; 0 disables.
    pub random: usize,
    /// Samples per segment for the 1-design check.
    pub design_substeps: usize,
    pub noise: Option<NoiseConfig>,
}

/// `0` and `±10^e` for 31 exponents `e` evenly spaced in `[-4, -1]`.
pub fn default_lambdas() -> Vec<f64> {
    let mut pos: Vec<f64> = (0..31).map(|i| 10f64.powf(-4.0 + 0.1 * i as f64)).collect();
    let mut out: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    out.push(0.0);
    out.append(&mut pos);
    out
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            operators: Vec::new(),
            random: 20,
            design_substeps: 4,
            noise: None,
        }
    }
}

/// Config file as written by users.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    /// Label used in output tables; defaults to the preset name.
    pub name: Option<String>,
    pub model: Option<ModelConfig>,
    pub pulse: Option<PulseConfig>,
    pub target: Option<TargetConfig>,
    pub objective: Option<ObjectiveConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Fully explicit configuration; the stored and hashed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub name: String,
    pub model: ModelConfig,
    pub pulse: PulseConfig,
    pub target: TargetConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub verify: VerifyConfig,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
    }

    pub fn from_preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            ..Self::default()
        }
    }

    /// Fills every section from the preset (if any) and validates the result.
    pub fn resolve(&self) -> Result<ResolvedConfig, CliError> {
        let resolved = match &self.preset {
            Some(p) => {
                if self.model.is_some() || self.target.is_some() || self.objective.is_some() {
                    return Err(cfg_err(format!(
                        "preset '{p}' fixes [model], [target] and [objective]; remove those sections"
                    )));
                }
                let spec = find_experiment(p).map_err(|e| cfg_err(e.to_string()))?;
                let mut base = from_spec(&spec);
                if let Some(pulse) = &self.pulse {
                    overlay_pulse(&mut base.pulse, pulse);
                }
                let mut verify = self.verify.clone();
                if verify.operators.is_empty() {
                    verify.operators = spec.perturbations.clone();
                }
                ResolvedConfig {
                    name: self.name.clone().unwrap_or(base.name),
                    optimizer: self.optimizer.clone(),
                    verify,
                    ..base
                }
            }
            None => {
                let missing = |what: &str| cfg_err(format!("missing [{what}] section (or set `preset`)"));
                ResolvedConfig {
                    name: self.name.clone().unwrap_or_else(|| "custom".into()),
                    model: self.model.clone().ok_or_else(|| missing("model"))?,
                    pulse: self.pulse.clone().ok_or_else(|| missing("pulse"))?,
                    target: self.target.clone().ok_or_else(|| missing("target"))?,
                    objective: self.objective.clone().ok_or_else(|| missing("objective"))?,
                    optimizer: self.optimizer.clone(),
                    verify: self.verify.clone(),
                }
            }
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

fn overlay_pulse(base: &mut PulseConfig, over: &PulseConfig) {
    if over.segments.is_some() {
        base.segments = over.segments;
    }
    if over.time.is_some() {
        base.time = over.time;
    }
    if over.grid.is_some() || over.scan.is_some() {
        base.grid = over.grid.clone();
        base.scan = over.scan.clone();
    }
}

fn from_spec(spec: &ExperimentSpec) -> ResolvedConfig {
    let model = match spec.model {
        ModelSpec::SingleQubit { rabi } => ModelConfig::SingleQubit { rabi },
        ModelSpec::CollectiveSpin { beta, n_qubits } => ModelConfig::CollectiveSpin { beta, n_qubits },
    };
    let target = match &spec.target {
        TargetRef::Fixture(f) => TargetConfig {
            fixture: Some(f.clone()),
            ..TargetConfig::default()
        },
        TargetRef::Inline(_) => unreachable!("presets use named fixtures"),
    };
    let objective = match &spec.robustness {
        RobustnessSpec::None => ObjectiveConfig {
            robustness: RobustnessKind::None,
            operator: None,
            excluded: None,
            weight: spec.weight,
        },
        RobustnessSpec::KnownV(v) => ObjectiveConfig {
            robustness: RobustnessKind::KnownV,
            operator: Some(v.clone()),
            excluded: None,
            weight: spec.weight,
        },
        RobustnessSpec::Universal { excluded } => ObjectiveConfig {
            robustness: RobustnessKind::Universal,
            operator: None,
            excluded: Some(excluded.iter().copied().collect()),
            weight: spec.weight,
        },
    };
    ResolvedConfig {
        name: spec.name(),
        model,
        pulse: PulseConfig {
            segments: Some(spec.segments),
            time: Some(spec.time),
            grid: spec.scan_grid.clone(),
            scan: None,
        },
        target,
        objective,
        optimizer: OptimizerConfig::default(),
        verify: VerifyConfig {
            operators: spec.perturbations.clone(),
            ..VerifyConfig::default()
        },
    }
}

fn complex(p: &[f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl ResolvedConfig {
    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelConfig::SingleQubit { rabi } => ModelSpec::SingleQubit { rabi },
            ModelConfig::CollectiveSpin { beta, n_qubits } => ModelSpec::CollectiveSpin { beta, n_qubits },
        }
    }

    /// Energy per dimensionless strength unit: `2π` over the time unit.
    pub fn energy_unit(&self) -> f64 {
        std::f64::consts::TAU / self.model_spec().time_unit()
    }

    pub fn target_ref(&self) -> Result<TargetRef, CliError> {
        let t = &self.target;
        let d = self.model_spec().dim();
        match (&t.fixture, &t.unitary, &t.initial, &t.target) {
            (Some(f), None, None, None) => Ok(TargetRef::Fixture(f.clone())),
            (None, Some(rows), None, None) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(cfg_err(format!("target.unitary must be {d}×{d}")));
                }
                let m = CMatrix::from_fn(d, d, |i, j| complex(&rows[i][j]));
                Ok(TargetRef::Inline(TargetSpec::unitary(m).map_err(|e| cfg_err(format!("target.unitary: {e}")))?))
            }
            (None, None, Some(a), Some(b)) => {
                if a.len() != d || b.len() != d {
                    return Err(cfg_err(format!("target.initial and target.target must have {d} entries")));
                }
                let ket = |v: &[[f64; 2]]| urc_core::qcore::VecOp::from_iterator(d, v.iter().map(complex));
                let spec = TargetSpec::state_from_kets(&ket(a), &ket(b)).map_err(|e| cfg_err(format!("target: {e}")))?;
                Ok(TargetRef::Inline(spec))
            }
            _ => Err(cfg_err("[target] needs exactly one of `fixture`, `unitary`, or `initial` with `target`")),
        }
    }

    pub fn robustness_spec(&self) -> Result<RobustnessSpec, CliError> {
        let o = &self.objective;
        match o.robustness {
            RobustnessKind::None => {
                if o.operator.is_some() || o.excluded.is_some() {
                    return Err(cfg_err("objective.robustness = \"none\" takes no operator or excluded list"));
                }
                Ok(RobustnessSpec::None)
            }
            RobustnessKind::KnownV => {
                let v = o.operator.clone().ok_or_else(|| cfg_err("objective.operator required for known_v"))?;
                check_operator(&v, "objective.operator")?;
                Ok(RobustnessSpec::KnownV(v))
            }
            RobustnessKind::Universal => {
                let ex: BTreeSet<usize> = o.excluded.clone().unwrap_or_else(|| vec![0]).into_iter().collect();
                Ok(RobustnessSpec::Universal { excluded: ex })
            }
        }
    }

    /// Dimensionless scan grid, if any.
    pub fn scan_grid(&self) -> Option<Vec<f64>> {
        match (&self.pulse.grid, &self.pulse.scan) {
            (Some(g), _) => Some(g.clone()),
            (None, Some(s)) => Some(uniform_grid(s.start, s.stop, s.step)),
            (None, None) => None,
        }
    }

    pub fn experiment(&self) -> Result<ExperimentSpec, CliError> {
        let segments = self.pulse.segments.ok_or_else(|| cfg_err("pulse.segments is required"))?;
        let grid = self.scan_grid();
        let time = match (self.pulse.time, &grid) {
            (Some(t), _) => t,
            (None, Some(g)) if !g.is_empty() => g[g.len() - 1],
            _ => return Err(cfg_err("pulse.time (or a scan grid) is required")),
        };
        let (group, method) = match self.name.split_once('.') {
            Some((g, m)) => (g.to_string(), m.to_string()),
            None => ("custom".to_string(), self.name.clone()),
        };
        Ok(ExperimentSpec {
            group,
            method,
            model: self.model_spec(),
            target: self.target_ref()?,
            robustness: self.robustness_spec()?,
            weight: self.objective.weight,
            segments,
            time,
            perturbations: self.verify.operators.clone(),
            scan_grid: grid,
        })
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        let o = &self.optimizer;
        OptimizeOptions {
            seed: o.seed,
            n_starts: o.n_starts,
            threshold: o.threshold,
            max_iterations: o.max_iterations,
            gradient: match o.gradient {
                GradientKind::Analytic => GradientMode::AnalyticWhenAvailable,
                GradientKind::FiniteDifference => GradientMode::FiniteDifference { step: o.fd_step },
            },
            early_exit: o.early_exit,
            ..OptimizeOptions::default()
        }
    }

    pub fn noise_correlation(&self) -> Result<Option<NoiseCorrelation>, CliError> {
        let Some(n) = &self.verify.noise else { return Ok(None) };
        let unit = self.model_spec().time_unit();
        let corr = match n.correlation {
            CorrelationKind::White => NoiseCorrelation::White {
                strength: n.strength.ok_or_else(|| cfg_err("verify.noise.strength required for white noise"))? * unit,
            },
            CorrelationKind::Exponential => NoiseCorrelation::Exponential {
                tau_c: n.tau_c.ok_or_else(|| cfg_err("verify.noise.tau_c required for exponential noise"))? * unit,
                variance: n.variance.unwrap_or(1.0),
            },
        };
        corr.validate().map_err(|e| cfg_err(format!("verify.noise: {e}")))?;
        Ok(Some(corr))
    }

    fn validate(&self) -> Result<(), CliError> {
        match self.model {
            ModelConfig::SingleQubit { rabi } if !positive(rabi) => {
                return Err(cfg_err("model.rabi must be positive"))
            }
            ModelConfig::CollectiveSpin { beta, n_qubits } if !positive(beta) || n_qubits < 2 => {
                return Err(cfg_err("model.beta must be positive and model.n_qubits ≥ 2"))
            }
            _ => {}
        }
        // TOML integers are i64; larger seeds could not be stored for reruns
        if i64::try_from(self.optimizer.seed).is_err() {
            return Err(cfg_err(format!("optimizer.seed must be ≤ {}", i64::MAX)));
        }
        let spec = self.experiment()?;
        if spec.segments == 0 {
            return Err(cfg_err("pulse.segments must be ≥ 1"));
        }
        if !positive(spec.time) {
            return Err(cfg_err("pulse.time must be positive"));
        }
        if let Some(g) = &spec.scan_grid {
            urc_core::optimize::validate_grid(g).map_err(|e| cfg_err(format!("pulse grid: {e}")))?;
        }
        if !(self.objective.weight.is_finite() && self.objective.weight >= 0.0) {
            return Err(cfg_err("objective.weight must be finite and ≥ 0"));
        }
        spec.objective().map_err(|e| cfg_err(e.to_string()))?;
        self.optimize_options().validate().map_err(|e| cfg_err(format!("[optimizer] {e}")))?;
        let v = &self.verify;
        if !v.lambdas.contains(&0.0) || v.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(cfg_err("verify.lambdas must be finite and contain 0"));
        }
        if v.design_substeps == 0 {
            return Err(cfg_err("verify.design_substeps must be ≥ 1"));
        }
        for op in &v.operators {
            check_operator(op, "verify.operators")?;
        }
        if let Some(n) = &v.noise {
            check_operator(&n.operator, "verify.noise.operator")?;
            if n.trajectories < urc_core::verify::MIN_TRAJECTORIES {
                return Err(cfg_err(format!(
                    "verify.noise.trajectories must be ≥ {}",
                    urc_core::verify::MIN_TRAJECTORIES
                )));
            }
            if n.substeps == 0 || !n.lambda.is_finite() {
                return Err(cfg_err("verify.noise needs substeps ≥ 1 and a finite lambda"));
            }
            self.noise_correlation()?;
        }
        Ok(())
    }

    /// Canonical TOML text; the basis of the config hash.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// Hash of the model section alone; pulses carry it so `verify` can
    /// reject pulses built for another system.
    pub fn model_hash(&self) -> String {
        sha256_hex(toml::to_string(&self.model).expect("model serializes").as_bytes())
    }
}

fn check_operator(name: &str, key: &str) -> Result<(), CliError> {
    if OPERATOR_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(cfg_err(format!("{key}: unknown operator '{name}' (expected one of {})", OPERATOR_NAMES.join(", "))))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
