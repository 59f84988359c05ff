// SPDX-License-Identifier: Apache-2.0

//! Verb implementations. Every verb resolves and validates all of its
//! configuration before creating any output file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde_json::json;
use urc_core::functionals::{chi_state, chi_unitary, evaluate, FunctionalValue};
use urc_core::models::{fixture_targets, two_qubit_random_raw, ControlModel, Pulse, TargetSpec};
use urc_core::optimize::experiments::preset_experiments;
use urc_core::optimize::{optimize_pulse, scan_point, OptimizationResult, StartStatus};
use urc_core::qcore::{ket_to_density, vec_inner, vectorize, CMatrix, VecOp, C64};
use urc_core::superop::{noise_kernel, Quadrature};
use urc_core::verify::{
    curvature_check, fidelity_sweep, noise_monte_carlo, one_design_check, random_direction_sweep, random_directions,
    SweepCurve,
};

use crate::config::{ExperimentConfig, ResolvedConfig};
use crate::output::{atomic_write, fmt_f64, parse_f64, read_sidecar, read_table, write_table, Provenance, Table};
use crate::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const PULSE_FILE: &str = "pulse.csv";

/// One resolved run and the directory it writes to.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: ResolvedConfig,
    pub dir: PathBuf,
}

impl Run {
    fn provenance(&self) -> Provenance {
        Provenance {
            runs: vec![(self.config.name.clone(), self.config.config_hash(), self.config.model_hash())],
            seed: self.config.optimizer.seed,
        }
    }
}

/// Where the runs come from: a config file, a preset, or a preset group.
#[derive(Debug, Clone, Default)]
pub struct Source {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
}

/// Resolves the source into runs. A group preset (`fig2`) expands to one
/// run per method, each in its own subdirectory of `out`.
pub fn resolve_runs(source: &Source, out: &Path) -> Result<Vec<Run>, CliError> {
    let mut base = match &source.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &source.preset {
        if base.preset.is_some() {
            return Err(CliError::Config("--preset conflicts with `preset` in the config file".into()));
        }
        base.preset = Some(p.clone());
    }
    if let Some(seed) = source.seed {
        base.optimizer.seed = seed;
    }
    let Some(preset) = base.preset.clone() else {
        if source.config.is_none() {
            return Err(CliError::Config("pass --config or --preset".into()));
        }
        return Ok(vec![Run {
            config: base.resolve()?,
            dir: out.to_path_buf(),
        }]);
    };
    if preset.contains('.') {
        return Ok(vec![Run {
            config: base.resolve()?,
            dir: out.to_path_buf(),
        }]);
    }
    let methods: Vec<String> = preset_experiments()
        .into_iter()
        .filter(|e| e.group == preset)
        .map(|e| e.method)
        .collect();
    if methods.is_empty() {
        return Err(CliError::Config(format!("unknown preset or group '{preset}'")));
    }
    methods
        .into_iter()
        .map(|m| {
            let mut cfg = base.clone();
            cfg.preset = Some(format!("{preset}.{m}"));
            Ok(Run {
                config: cfg.resolve()?,
                dir: out.join(&m),
            })
        })
        .collect()
}

fn value_cells(v: &FunctionalValue) -> Vec<String> {
    vec![fmt_f64(v.total), fmt_f64(v.j0), fmt_f64(v.jrob)]
}

fn status_label(s: &StartStatus) -> String {
    match s {
        StartStatus::Converged(b) => format!("{b:?}"),
        StartStatus::Failed(msg) => format!("failed: {msg}"),
    }
}

fn pulse_table(pulse: &Pulse, time: f64) -> Table {
    let mut header: Vec<&'static str> = vec!["segment", "t_start"];
    const CH: [&str; 8] = ["ch0", "ch1", "ch2", "ch3", "ch4", "ch5", "ch6", "ch7"];
    header.extend(&CH[..pulse.channels()]);
    let mut t = Table::new(&header);
    let n = pulse.segments();
    for k in 0..n {
        let mut row = vec![k.to_string(), fmt_f64(time * k as f64 / n as f64)];
        row.extend(pulse.row(k).iter().map(|x| fmt_f64(*x)));
        t.push(row);
    }
    t
}

fn write_pulse(dir: &Path, name: &str, run: &Run, pulse: &Pulse, time: f64) -> Result<(), CliError> {
    write_table(
        dir,
        name,
        &pulse_table(pulse, time),
        &run.provenance(),
        json!({
            "kind": "pulse",
            "name": run.config.name,
            "config_hash": run.config.config_hash(),
            "model_hash": run.config.model_hash(),
            "time": time,
            "segments": pulse.segments(),
            "channels": pulse.channels(),
        }),
    )?;
    Ok(())
}

fn write_result_tables(dir: &Path, run: &Run, result: &OptimizationResult, time: f64) -> Result<(), CliError> {
    let prov = run.provenance();
    write_pulse(dir, PULSE_FILE, run, &result.best_pulse, time)?;

    let mut summary = Table::new(&["name", "time", "total", "j0", "jrob", "weight", "success", "best_start", "threshold"]);
    let mut row = vec![run.config.name.clone(), fmt_f64(time)];
    row.extend(value_cells(&result.value));
    row.extend([
        fmt_f64(result.value.weight),
        result.success.to_string(),
        result.best_start.to_string(),
        fmt_f64(result.threshold),
    ]);
    summary.push(row);
    write_table(
        dir,
        "summary.csv",
        &summary,
        &prov,
        json!({"wall_time_s": result.wall_time.as_secs_f64(), "success": result.success}),
    )?;

    let mut starts = Table::new(&["start", "seed", "status", "iterations", "evaluations", "total", "j0", "jrob"]);
    let mut trace = Table::new(&["start", "iteration", "total"]);
    for s in &result.starts {
        let mut row = vec![
            s.index.to_string(),
            s.seed.to_string(),
            status_label(&s.status),
            s.iterations.to_string(),
            s.evaluations.to_string(),
        ];
        match &s.value {
            Some(v) => row.extend(value_cells(v)),
            None => row.extend(["".into(), "".into(), "".into()]),
        }
        starts.push(row);
        for (it, f) in &s.trace {
            trace.push(vec![s.index.to_string(), it.to_string(), fmt_f64(*f)]);
        }
    }
    write_table(dir, "starts.csv", &starts, &prov, json!({}))?;
    write_table(dir, "trace.csv", &trace, &prov, json!({}))?;
    Ok(())
}

fn store_config(run: &Run) -> Result<(), CliError> {
    atomic_write(&run.dir.join(CONFIG_FILE), run.config.to_toml().as_bytes())
}

/// Optimizes every run; returns whether all of them met the threshold.
pub fn cmd_optimize(runs: &[Run]) -> Result<bool, CliError> {
    let prepared = runs
        .iter()
        .map(|r| {
            let spec = r.config.experiment()?;
            Ok((spec.objective()?, spec.time))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut all = true;
    for (run, (objective, time)) in runs.iter().zip(prepared) {
        store_config(run)?;
        let result = optimize_pulse(&objective, &run.config.optimize_options())?;
        log::info!(
            "{}: total {:e} (J₀ {:e}, J_rob {:e}), success {}",
            run.config.name,
            result.value.total,
            result.value.j0,
            result.value.jrob,
            result.success
        );
        write_result_tables(&run.dir, run, &result, time)?;
        all &= result.success;
    }
    Ok(all)
}

fn point_name(i: usize) -> String {
    format!("point_{i:03}.csv")
}

const SCAN_HEADER: [&str; 6] = ["index", "time", "total", "j0", "jrob", "success"];

/// Reads a stored scan row if it exists and belongs to this config.
fn cached_point(dir: &Path, i: usize, hash: &str) -> Option<Vec<String>> {
    let path = dir.join("points").join(point_name(i));
    if !path.exists() {
        return None;
    }
    let meta = read_sidecar(&path).ok()?;
    if meta["config_hash"] != hash {
        log::warn!("{}: stale config hash, recomputing", path.display());
        return None;
    }
    let (header, rows) = read_table(&path).ok()?;
    (header == SCAN_HEADER && rows.len() == 1).then(|| rows[0].clone())
}

/// Minimal-control-time scans, resumable per grid point.
pub fn cmd_scan_mct(runs: &[Run]) -> Result<(), CliError> {
    let prepared = runs
        .iter()
        .map(|r| {
            let spec = r.config.experiment()?;
            let grid = spec
                .scan_grid
                .clone()
                .ok_or_else(|| CliError::Config(format!("{}: no scan grid ([pulse] grid or scan)", r.config.name)))?;
            let physical = spec.physical_grid().expect("grid present");
            Ok((spec.objective()?, grid, physical))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for (run, (template, grid, physical)) in runs.iter().zip(prepared) {
        store_config(run)?;
        let hash = run.config.config_hash();
        let prov = run.provenance();
        let points_dir = run.dir.join("points");
        let options = run.config.optimize_options();
        let mut table = Table::new(&SCAN_HEADER);
        for i in 0..grid.len() {
            let row = match cached_point(&run.dir, i, &hash) {
                Some(row) => {
                    log::info!("{}: grid point {i} already complete", run.config.name);
                    row
                }
                None => {
                    let p = scan_point(&template, &physical, i, &options)?;
                    log::info!("{}: t = {} total {:e} success {}", run.config.name, grid[i], p.value.total, p.success);
                    let mut row = vec![i.to_string(), fmt_f64(grid[i])];
                    row.extend(value_cells(&p.value));
                    row.push(p.success.to_string());
                    write_pulse(&points_dir, &format!("pulse_{i:03}.csv"), run, &p.result.best_pulse, grid[i])?;
                    let mut single = Table::new(&SCAN_HEADER);
                    single.push(row.clone());
                    write_table(
                        &points_dir,
                        &point_name(i),
                        &single,
                        &prov,
                        json!({"config_hash": hash, "wall_time_s": p.result.wall_time.as_secs_f64()}),
                    )?;
                    row
                }
            };
            table.push(row);
        }
        let t_mct = table.rows.iter().find(|r| r[5] == "true").map(|r| r[1].clone());
        let resolution = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        write_table(&run.dir, "scan.csv", &table, &prov, json!({}))?;
        let mut mct = Table::new(&["name", "t_mct", "resolution"]);
        mct.push(vec![run.config.name.clone(), t_mct.clone().unwrap_or_default(), fmt_f64(resolution)]);
        write_table(&run.dir, "mct.csv", &mct, &prov, json!({}))?;
        log::info!("{}: minimal control time {}", run.config.name, t_mct.as_deref().unwrap_or("not reached"));
    }
    Ok(())
}

/// Loads a pulse table, checking its model hash and shape against `run`.
pub fn load_pulse(path: &Path, run: &Run, model: &ControlModel, force: bool) -> Result<(Pulse, f64), CliError> {
    let meta = read_sidecar(path)?;
    let expected = run.config.model_hash();
    if meta["model_hash"] != expected.as_str() && !force {
        return Err(CliError::Config(format!(
            "{}: built for a different model (hash {}, expected {expected}); pass --force to override",
            path.display(),
            meta["model_hash"]
        )));
    }
    let time = meta["time"]
        .as_f64()
        .ok_or_else(|| CliError::Config(format!("{}: sidecar lacks `time`", path.display())))?;
    let (header, rows) = read_table(path)?;
    let channels = header.len().saturating_sub(2);
    if channels != model.n_channels() {
        return Err(CliError::Config(format!(
            "{}: {channels} channels, model has {}",
            path.display(),
            model.n_channels()
        )));
    }
    let mut values = Vec::with_capacity(rows.len() * channels);
    for r in &rows {
        if r.len() != header.len() {
            return Err(CliError::Config(format!("{}: ragged row", path.display())));
        }
        for c in &r[2..] {
            values.push(parse_f64(c)?);
        }
    }
    let pulse = Pulse::from_duration(values, channels, time * run.config.model_spec().time_unit())?;
    model.check_pulse(&pulse)?;
    Ok((pulse, time))
}

/// Predicted `χ` for a sweep against `target`.
fn predicted_chi(model: &ControlModel, pulse: &Pulse, target: &TargetSpec, v: &CMatrix) -> Result<f64, CliError> {
    Ok(match target {
        TargetSpec::Unitary(_) => chi_unitary(model, pulse, v, Quadrature::Exact)?,
        TargetSpec::State { initial, .. } => chi_state(model, pulse, v, initial, Quadrature::Exact)?,
    })
}

#[derive(Default)]
struct VerifyTables {
    sweep: Option<Table>,
    curvature: Option<Table>,
    design: Option<Table>,
    design_summary: Option<Table>,
    noise: Option<Table>,
}

fn table<'a>(slot: &'a mut Option<Table>, header: &[&'static str]) -> &'a mut Table {
    slot.get_or_insert_with(|| Table::new(header))
}

fn push_curve(
    t: &mut VerifyTables,
    method: &str,
    curve: &SweepCurve,
    predicted_phys: f64,
    dimless: &[f64],
    energy: f64,
) {
    let sweep = table(&mut t.sweep, &["method", "perturbation", "lambda", "fidelity", "infidelity"]);
    for (l, f) in dimless.iter().zip(&curve.fidelities) {
        sweep.push(vec![method.into(), curve.label.clone(), fmt_f64(*l), fmt_f64(*f), fmt_f64(1.0 - f)]);
    }
    // 1 − F = χ_phys λ_phys² = (χ_phys E²) λ²
    let scale = energy * energy;
    let curv = table(
        &mut t.curvature,
        &["method", "perturbation", "fitted_chi", "predicted_chi", "deviation", "window", "points", "residual"],
    );
    match curvature_check(curve, predicted_phys) {
        Ok(fit) => curv.push(vec![
            method.into(),
            curve.label.clone(),
            fmt_f64(fit.fitted * scale),
            fmt_f64(fit.predicted * scale),
            fmt_f64(fit.deviation),
            fmt_f64(fit.window / energy),
            fit.points.to_string(),
            fmt_f64(fit.residual),
        ]),
        Err(e) => {
            log::warn!("{method}/{}: no curvature fit: {e}", curve.label);
            curv.push(vec![
                method.into(),
                curve.label.clone(),
                String::new(),
                fmt_f64(predicted_phys * scale),
                String::new(),
                String::new(),
                "0".into(),
                String::new(),
            ]);
        }
    }
}

fn verify_one(run: &Run, pulse_path: &Path, force: bool, tables: &mut VerifyTables) -> Result<(), CliError> {
    let cfg = &run.config;
    let spec = cfg.experiment()?;
    let model = spec.model.build()?;
    let target = spec.target.resolve()?;
    let (pulse, _time) = load_pulse(pulse_path, run, &model, force)?;
    let energy = cfg.energy_unit();
    let lambdas: Vec<f64> = cfg.verify.lambdas.iter().map(|l| l * energy).collect();
    let method = spec.method.as_str();

    let j0 = evaluate(&spec.objective()?, &pulse)?.j0;
    log::info!("{}: J₀ = {j0:e}", cfg.name);

    for (name, v) in spec.perturbation_operators()? {
        let curve = fidelity_sweep(&model, &pulse, &target, &v, &lambdas, name)?;
        let predicted = predicted_chi(&model, &pulse, &target, &v)?;
        push_curve(tables, method, &curve, predicted, &cfg.verify.lambdas, energy);
    }

    let basis = spec.model.basis()?;
    let traceless: BTreeSet<usize> = basis.labels().into_iter().filter(|c| *c != 0).collect();
    if cfg.verify.random > 0 {
        let seed = cfg.optimizer.seed;
        let mut curve = random_direction_sweep(&model, &pulse, &target, &basis, &traceless, cfg.verify.random, &lambdas, seed)?;
        curve.label = "random".into();
        let dirs = random_directions(&basis, &traceless, cfg.verify.random, seed)?;
        let mut predicted = 0.0;
        for v in &dirs {
            predicted += predicted_chi(&model, &pulse, &target, v)?;
        }
        predicted /= dirs.len() as f64;
        push_curve(tables, method, &curve, predicted, &cfg.verify.lambdas, energy);
    }

    let report = one_design_check(&model, &pulse, &basis, pulse.segments() * cfg.verify.design_substeps)?;
    let design = table(&mut tables.design, &["method", "basis_index", "class", "deviation"]);
    for (j, dev) in &report.deviations {
        design.push(vec![method.into(), j.to_string(), basis.class_of(*j).to_string(), fmt_f64(*dev)]);
    }
    table(
        &mut tables.design_summary,
        &["method", "substeps", "max_deviation", "sum_of_squares"],
    )
    .push(vec![
        method.into(),
        report.substeps.to_string(),
        fmt_f64(report.max_deviation),
        fmt_f64(report.sum_of_squares),
    ]);

    if let (Some(n), Some(corr)) = (&cfg.verify.noise, cfg.noise_correlation()?) {
        let sigma = match &target {
            TargetSpec::State { initial, .. } => initial.clone(),
            TargetSpec::Unitary(_) => {
                let d = model.dim();
                ket_to_density(&VecOp::from_fn(d, |i, _| if i == 0 { C64::from(1.0) } else { C64::from(0.0) }))
            }
        };
        let v = spec.model.operator(&n.operator)?;
        let lambda = n.lambda * energy;
        let est = noise_monte_carlo(&model, &pulse, &sigma, &v, &corr, lambda, n.trajectories, cfg.optimizer.seed, n.substeps)?;
        let k = noise_kernel(&model, &pulse, &sigma, &corr, n.substeps)?;
        let vv = vectorize(&v);
        let predicted = lambda * lambda * vec_inner(&vv, &(&k.matrix * &vv)).re;
        table(
            &mut tables.noise,
            &["method", "operator", "lambda", "predicted_infidelity", "mc_infidelity", "std_error", "trajectories", "substeps"],
        )
        .push(vec![
            method.into(),
            n.operator.clone(),
            fmt_f64(n.lambda),
            fmt_f64(predicted),
            fmt_f64(est.mean_infidelity()),
            fmt_f64(est.std_error),
            est.trajectories.to_string(),
            est.substeps.to_string(),
        ]);
    }
    Ok(())
}

/// Verifies stored pulses and writes combined tables to `out`.
///
/// With no explicit pulse each run reads `pulse.csv` from its own
/// directory, so a group verify follows a group optimize.
pub fn cmd_verify(runs: &[Run], out: &Path, pulse: Option<&Path>, force: bool) -> Result<(), CliError> {
    if pulse.is_some() && runs.len() > 1 {
        return Err(CliError::Config("--pulse applies to a single experiment, not a group".into()));
    }
    let paths: Vec<PathBuf> = runs
        .iter()
        .map(|r| pulse.map(Path::to_path_buf).unwrap_or_else(|| r.dir.join(PULSE_FILE)))
        .collect();
    for (run, path) in runs.iter().zip(&paths) {
        let spec = run.config.experiment()?;
        load_pulse(path, run, &spec.model.build()?, force)?;
        run.config.noise_correlation()?;
    }
    let mut tables = VerifyTables::default();
    for (run, path) in runs.iter().zip(&paths) {
        verify_one(run, path, force, &mut tables)?;
    }
    let prov = Provenance {
        runs: runs.iter().flat_map(|r| r.provenance().runs).collect(),
        seed: runs[0].config.optimizer.seed,
    };
    let units = json!({"lambda_unit": "model frequency (Rabi frequency or β)", "chi_unit": "per squared lambda unit"});
    for (name, t) in [
        ("sweep.csv", tables.sweep),
        ("curvature.csv", tables.curvature),
        ("design.csv", tables.design),
        ("design_summary.csv", tables.design_summary),
        ("noise.csv", tables.noise),
    ] {
        if let Some(t) = t {
            write_table(out, name, &t, &prov, units.clone())?;
        }
    }
    Ok(())
}

fn fmt_complex(z: C64) -> String {
    format!("{:?}{:+?}i", z.re, z.im)
}

fn fmt_matrix(m: &CMatrix) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect::<Vec<_>>().join("  "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Sorted fixture names.
pub fn fixtures_list() -> Result<String, CliError> {
    Ok(fixture_targets()?.keys().copied().collect::<Vec<_>>().join("\n"))
}

/// Full-precision dump of one fixture.
pub fn fixtures_dump(name: &str) -> Result<String, CliError> {
    let all = fixture_targets()?;
    let target = all
        .get(name)
        .ok_or_else(|| CliError::Config(format!("unknown fixture '{name}' (try `urc fixtures list`)")))?;
    let mut out = format!("# {name}\n");
    match target {
        TargetSpec::Unitary(u) => {
            if name == "two_qubit_random" {
                out += &format!("## printed digits\n{}\n## nearest unitary (used)\n", fmt_matrix(&two_qubit_random_raw()));
            }
            out += &fmt_matrix(u);
        }
        TargetSpec::State { initial, target } => {
            out += &format!("## initial\n{}\n## target\n{}", fmt_matrix(initial), fmt_matrix(target));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_expands_to_methods() {
        let src = Source {
            preset: Some("fig2".into()),
            ..Source::default()
        };
        let runs = resolve_runs(&src, Path::new("o")).unwrap();
        let dirs: Vec<_> = runs.iter().map(|r| r.dir.clone()).collect();
        assert_eq!(dirs.len(), 4);
        assert!(dirs.contains(&Path::new("o").join("robust_1body")));
        assert!(resolve_runs(&Source { preset: Some("fig9".into()), ..Source::default() }, Path::new("o")).is_err());
        assert!(resolve_runs(&Source::default(), Path::new("o")).is_err());
    }

    #[test]
    fn seed_override_changes_hash() {
        let a = resolve_runs(&Source { preset: Some("fig1.urc".into()), ..Source::default() }, Path::new("o")).unwrap();
        let b = resolve_runs(
            &Source {
                preset: Some("fig1.urc".into()),
                seed: Some(5),
                ..Source::default()
            },
            Path::new("o"),
        )
        .unwrap();
        assert_eq!(b[0].config.optimizer.seed, 5);
        assert_ne!(a[0].config.config_hash(), b[0].config.config_hash());
        assert_eq!(a[0].config.model_hash(), b[0].config.model_hash());
    }

    #[test]
    fn fixture_dumps() {
        assert_eq!(fixtures_list().unwrap(), "dicke4\nms_gate\nsingle_qubit_z\ntwo_qubit_random");
        let d = fixtures_dump("two_qubit_random").unwrap();
        assert!(d.contains("0.51762131+0.11456864i"), "{d}");
        assert!(fixtures_dump("nope").is_err());
        assert!(fixtures_dump("dicke4").unwrap().contains("## target"));
    }
}
