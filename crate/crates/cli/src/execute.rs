//! Command execution and file emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cmcflow::ambient::AmbientMetric;
use cmcflow::diagnostics::{
    audit_monotonicity, fit_rate, record, series_csv, AuditTolerances, DiagRow, RateField, RateFit,
};
use cmcflow::flow::{run, sweep_threshold_with, FlowKind, RunOutcome, Termination};
use cmcflow::stability::{assemble, spectrum, AssembleTolerances, SpectrumReport};
use cmcflow::surface::{
    enclosed_volume, format_sig17, geometry_with, make_sphere, perturb, read_snapshot, sphere_area, sphere_of_volume,
    write_snapshot, GeometryOptions, RadialGraph, SphericalGrid,
};
use cmcflow::Error;
use serde_json::{json, Map, Value};

use crate::config::{constraint_of, variant_of, Command, FitFieldSpec, RunSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_MAX_TIME: i32 = 2;
pub const EXIT_GRAPH_FAIL: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;
pub const EXIT_FLOW_UNDEFINED: i32 = 5;
pub const EXIT_CONFIG: i32 = 64;

pub fn exit_code(t: &Termination) -> i32 {
    match t {
        Termination::Converged => EXIT_OK,
        Termination::MaxTime => EXIT_MAX_TIME,
        Termination::GraphFail(_) => EXIT_GRAPH_FAIL,
        Termination::Blowup(_) => EXIT_BLOWUP,
        Termination::FlowUndefined(_) => EXIT_FLOW_UNDEFINED,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("{context}: {source}")]
    Compute {
        context: String,
        #[source]
        source: Error,
    },
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

fn compute(context: &str) -> impl FnOnce(Error) -> ExecError + '_ {
    move |source| ExecError::Compute {
        context: context.into(),
        source,
    }
}

pub struct Execution {
    pub exit_code: i32,
    pub summary: Map<String, Value>,
    pub out_dir: PathBuf,
}

pub struct Options {
    pub out_override: Option<PathBuf>,
    pub quiet: bool,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExecError> {
    fs::write(path, contents).map_err(|e| ExecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn opt_number(x: Option<f64>) -> Value {
    x.map(number).unwrap_or(Value::Null)
}

fn timestamp() -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!(secs)
}

fn base_summary(spec: &RunSpec, command: Command) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command.name()));
    m.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    let mut echo = spec.clone();
    echo.command = Some(command);
    m.insert("config".into(), serde_json::to_value(&echo).expect("config serializes"));
    m.insert("timestamp".into(), timestamp());
    m
}

fn write_summary(dir: &Path, summary: &Map<String, Value>) -> Result<(), ExecError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), &(text + "\n"))
}

/// The starting surface: a snapshot, or the `r0` sphere with the listed modes applied.
pub fn initial_surface(spec: &RunSpec, metric: &AmbientMetric) -> Result<RadialGraph, Error> {
    if let Some(path) = &spec.initial.snapshot {
        return read_snapshot(path, metric.clone());
    }
    let grid = SphericalGrid::new(spec.initial.band_limit)?;
    let mut g = make_sphere(grid, metric.clone(), spec.initial.r0)?;
    for m in &spec.initial.modes {
        g = perturb(&g, (m.l, m.m), m.eps)?;
    }
    Ok(g)
}

fn say(opts: &Options, msg: impl AsRef<str>) {
    if !opts.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn execute(spec: &RunSpec, command: Command, opts: &Options) -> Result<Execution, ExecError> {
    let out_dir = opts.out_override.clone().unwrap_or_else(|| spec.output.directory.clone());
    fs::create_dir_all(&out_dir).map_err(|e| ExecError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let metric = spec.build_metric().map_err(|e| ExecError::Compute {
        context: "metric".into(),
        source: Error::Domain(e.to_string()),
    })?;
    let (exit_code, summary) = match command {
        Command::Flow => run_flow(spec, &metric, &out_dir, opts)?,
        Command::Spectrum => run_spectrum(spec, &metric, &out_dir, opts)?,
        Command::Geometry => run_geometry(spec, &metric, &out_dir, opts)?,
        Command::Sweep => run_sweep(spec, &metric, &out_dir, opts)?,
    };
    write_summary(&out_dir, &summary)?;
    Ok(Execution {
        exit_code,
        summary,
        out_dir,
    })
}

/// Fit over the second half of the recorded time span.
fn late_fit(rows: &[DiagRow], field: FitFieldSpec) -> Option<RateFit> {
    let t_end = rows.last()?.t;
    let field = match field {
        FitFieldSpec::MaxDev => RateField::MaxDev,
        FitFieldSpec::L2Dev => RateField::L2Dev,
    };
    fit_rate(rows, field, (0.5 * t_end, t_end)).ok()
}

/// Spectrum at the limit of a converged flow: the reference coordinate
/// sphere for unperturbed metrics, the converged surface otherwise.
fn limit_spectrum(spec: &RunSpec, outcome: &RunOutcome) -> Result<SpectrumReport, Error> {
    let s = spec.spectrum_or_default();
    let graph = &outcome.state.graph;
    let surface = match (graph.metric().is_perturbed(), outcome.r_ref) {
        (false, Some(r)) => make_sphere(graph.grid().clone(), graph.metric().clone(), r)?,
        _ => graph.clone(),
    };
    let tol = AssembleTolerances {
        umbilic: s.umbilic_tol,
        cmc: s.cmc_tol.max(spec.flow.tol_h),
    };
    let op = assemble(&surface, s.l_op, variant_of(s.variant), &tol)?;
    spectrum(&op, constraint_of(s.constraint))
}

fn run_flow(
    spec: &RunSpec,
    metric: &AmbientMetric,
    dir: &Path,
    opts: &Options,
) -> Result<(i32, Map<String, Value>), ExecError> {
    let mut summary = base_summary(spec, Command::Flow);
    let initial = match initial_surface(spec, metric) {
        Ok(g) => g,
        Err(e) if e.is_graph_failure() => {
            let t = Termination::GraphFail(e.to_string());
            say(opts, format!("initial surface invalid: {e}"));
            summary.insert("termination".into(), json!(t.name()));
            summary.insert("termination_detail".into(), json!(e.to_string()));
            return Ok((exit_code(&t), summary));
        }
        Err(e) => return Err(compute("initial surface")(e)),
    };
    let cfg = spec.flow_config();
    let snapshot_every = spec.output.snapshot_every;
    let mut rows: Vec<DiagRow> = Vec::new();
    let mut snap_err: Option<Error> = None;
    let outcome = run(initial, &cfg, |state| {
        rows.push(record(state)?);
        if state.step_index == 0 || (snapshot_every > 0 && state.step_index % snapshot_every == 0) {
            if let Err(e) = write_snapshot(&state.graph, dir.join(format!("snap_{}.csv", state.step_index))) {
                snap_err.get_or_insert(e);
            }
        }
        Ok(())
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(Error::Precondition(msg)) => {
            let t = Termination::GraphFail(msg.clone());
            say(opts, format!("initial surface invalid: {msg}"));
            summary.insert("termination".into(), json!(t.name()));
            summary.insert("termination_detail".into(), json!(msg));
            return Ok((exit_code(&t), summary));
        }
        Err(e) => return Err(compute("flow")(e)),
    };
    if let Some(e) = snap_err {
        return Err(compute("snapshot")(e));
    }
    let final_snap = dir.join(format!("snap_{}.csv", outcome.state.step_index));
    write_snapshot(&outcome.state.graph, &final_snap).map_err(compute("snapshot"))?;
    write_file(&dir.join("series.csv"), &series_csv(&rows))?;

    let last = rows.last().expect("observer saw the initial state");
    let kind = cfg.kind;
    let (conserved_name, conserved_final) = match kind {
        FlowKind::Volume => ("volume", last.volume),
        FlowKind::Area => ("area", last.area),
    };
    let drift = (conserved_final - outcome.conserved_initial) / outcome.conserved_initial;
    let floor = if kind == FlowKind::Volume && !metric.is_perturbed() {
        let v0 = outcome.conserved_initial;
        sphere_of_volume(metric, v0)
            .and_then(|r| sphere_area(metric, r))
            .map(|a| a.powi(3) / (v0 * v0))
            .ok()
    } else {
        None
    };
    let audit = audit_monotonicity(&rows, kind, &AuditTolerances::default(), floor);
    let fit = late_fit(&rows, spec.flow.fit_field);

    let t = &outcome.termination;
    summary.insert("termination".into(), json!(t.name()));
    summary.insert("termination_detail".into(), t.detail().map(Value::from).unwrap_or(Value::Null));
    summary.insert("flow_kind".into(), json!(kind.name()));
    summary.insert("steps".into(), json!(outcome.state.step_index));
    summary.insert("final_t".into(), number(outcome.state.t));
    summary.insert("final_max_dev".into(), number(outcome.max_dev));
    summary.insert("r_ref".into(), opt_number(outcome.r_ref));
    summary.insert("max_rho_dev".into(), opt_number(outcome.sup_dev));
    summary.insert("conserved_quantity".into(), json!(conserved_name));
    summary.insert("conserved_initial".into(), number(outcome.conserved_initial));
    summary.insert("conserved_final".into(), number(conserved_final));
    summary.insert("conservation_drift".into(), number(drift));
    summary.insert("iso_floor".into(), opt_number(floor));
    summary.insert("audit_violations".into(), json!(audit.violations.len()));
    summary.insert("audit_notes".into(), json!(audit.notes));
    summary.insert("fit_lambda".into(), opt_number(fit.map(|f| f.lambda)));
    summary.insert("fit_r2".into(), opt_number(fit.map(|f| f.r2)));
    summary.insert("fit_window_start".into(), opt_number(fit.map(|f| f.window.0)));
    summary.insert("fit_window_end".into(), opt_number(fit.map(|f| f.window.1)));

    let (mut predicted, mut variant, mut spec_err) = (Value::Null, Value::Null, Value::Null);
    if spec.spectrum.is_some() && t.is_converged() {
        match limit_spectrum(spec, &outcome) {
            Ok(rep) => {
                predicted = number(rep.predicted_rate);
                variant = json!(rep.variant.name());
                summary.insert("spectrum_largest_eigenvalue".into(), number(rep.largest()));
                write_file(&dir.join("spectrum.csv"), &rep.to_csv())?;
            }
            Err(e) => spec_err = json!(e.to_string()),
        }
    }
    summary.insert("predicted_rate".into(), predicted);
    summary.insert("spectrum_variant".into(), variant);
    if !spec_err.is_null() {
        summary.insert("spectrum_error".into(), spec_err);
    }
    say(
        opts,
        format!(
            "{}: t={} steps={} max|H-avg|={:.3e}",
            t,
            outcome.state.t,
            outcome.state.step_index,
            outcome.max_dev
        ),
    );
    Ok((exit_code(t), summary))
}

fn run_spectrum(
    spec: &RunSpec,
    metric: &AmbientMetric,
    dir: &Path,
    opts: &Options,
) -> Result<(i32, Map<String, Value>), ExecError> {
    let s = spec.spectrum_or_default();
    let surface = initial_surface(spec, metric).map_err(compute("initial surface"))?;
    let tol = AssembleTolerances {
        umbilic: s.umbilic_tol,
        cmc: s.cmc_tol,
    };
    let op = assemble(&surface, s.l_op, variant_of(s.variant), &tol).map_err(compute("assemble"))?;
    let rep = spectrum(&op, constraint_of(s.constraint)).map_err(compute("spectrum"))?;
    write_file(&dir.join("spectrum.csv"), &rep.to_csv())?;
    let mut summary = base_summary(spec, Command::Spectrum);
    summary.insert("predicted_rate".into(), number(rep.predicted_rate));
    summary.insert("largest_eigenvalue".into(), number(rep.largest()));
    summary.insert("l0_eigenvalue".into(), number(rep.l0_eigenvalue));
    summary.insert("variant".into(), json!(rep.variant.name()));
    summary.insert("constraint".into(), json!(rep.constraint.name()));
    summary.insert("basis_size".into(), json!(op.len()));
    summary.insert("symmetry_defect".into(), number(op.symmetry_defect()));
    say(opts, format!("predicted rate {:.6e} ({} variant)", rep.predicted_rate, rep.variant));
    Ok((EXIT_OK, summary))
}

fn run_geometry(
    spec: &RunSpec,
    metric: &AmbientMetric,
    dir: &Path,
    opts: &Options,
) -> Result<(i32, Map<String, Value>), ExecError> {
    let mut summary = base_summary(spec, Command::Geometry);
    let surface = match initial_surface(spec, metric) {
        Ok(g) => g,
        Err(e) if e.is_graph_failure() => {
            summary.insert("termination".into(), json!("graph_fail"));
            summary.insert("termination_detail".into(), json!(e.to_string()));
            say(opts, e.to_string());
            return Ok((EXIT_GRAPH_FAIL, summary));
        }
        Err(e) => return Err(compute("initial surface")(e)),
    };
    let opts_geom = GeometryOptions {
        graph_eps: spec.flow.graph_eps,
    };
    let fields = match geometry_with(&surface, &opts_geom) {
        Ok(f) => f,
        Err(e) if e.is_graph_failure() => {
            summary.insert("termination".into(), json!("graph_fail"));
            summary.insert("termination_detail".into(), json!(e.to_string()));
            say(opts, e.to_string());
            return Ok((EXIT_GRAPH_FAIL, summary));
        }
        Err(e) => return Err(compute("geometry")(e)),
    };
    let grid = surface.grid();
    let mut out = String::from("theta,phi,rho,H,kappa1,kappa2,ring_norm,chi,area_element\n");
    for (i, n) in fields.nodes().iter().enumerate() {
        let (j, k) = grid.ring_column(i);
        let cols = [
            grid.theta()[j],
            grid.phi()[k],
            surface.rho()[i],
            n.mean_curvature,
            n.principal[0],
            n.principal[1],
            n.ring_norm2.max(0.0).sqrt(),
            n.chi,
            n.area_element,
        ];
        out.push_str(&cols.iter().map(|v| format_sig17(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    write_file(&dir.join("geometry.csv"), &out)?;
    let area = fields.area();
    let volume = enclosed_volume(&surface).map_err(compute("volume"))?;
    let (kmin, kmax) = fields.kappa_range();
    summary.insert("termination".into(), json!("ok"));
    summary.insert("band_limit".into(), json!(grid.l_max()));
    summary.insert("area".into(), number(area));
    summary.insert("volume".into(), number(volume));
    summary.insert("iso_ratio".into(), number(area.powi(3) / (volume * volume)));
    summary.insert("kappa_min".into(), number(kmin));
    summary.insert("kappa_max".into(), number(kmax));
    summary.insert("max_ring".into(), number(fields.max_ring()));
    summary.insert("min_chi".into(), number(fields.min_chi()));
    say(opts, format!("area {area:.12e}, volume {volume:.12e}"));
    Ok((EXIT_OK, summary))
}

fn run_sweep(
    spec: &RunSpec,
    metric: &AmbientMetric,
    dir: &Path,
    opts: &Options,
) -> Result<(i32, Map<String, Value>), ExecError> {
    let sw = spec.sweep_or_default();
    let grid = SphericalGrid::new(spec.initial.band_limit).map_err(compute("grid"))?;
    let base = make_sphere(grid, metric.clone(), spec.initial.r0).map_err(compute("base sphere"))?;
    let cfg = spec.flow_config();
    let mut index = 0usize;
    let mut io_err: Option<ExecError> = None;
    let result = sweep_threshold_with(&base, (sw.mode.l, sw.mode.m), &cfg, sw.eps_min, sw.bisection_steps, |eps, g, c| {
        let probe_dir = dir.join(format!("probe_{index:02}"));
        index += 1;
        let outcome = match run(g.clone(), c, |_| Ok(())) {
            Ok(o) => o,
            Err(Error::Precondition(msg)) => {
                let t = Termination::GraphFail(msg);
                probe_summary(&probe_dir, eps, &t, None, &mut io_err);
                return Ok(t);
            }
            Err(e) => return Err(e),
        };
        say(opts, format!("probe eps={eps:.6e}: {}", outcome.termination.name()));
        probe_summary(&probe_dir, eps, &outcome.termination, Some(&outcome), &mut io_err);
        Ok(outcome.termination)
    })
    .map_err(compute("sweep"))?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let mut csv = String::from("eps,termination\n");
    for p in &result.probes {
        csv.push_str(&format!("{},{}\n", format_sig17(p.eps), p.termination.name()));
    }
    write_file(&dir.join("sweep.csv"), &csv)?;
    let mut summary = base_summary(spec, Command::Sweep);
    summary.insert("termination".into(), json!("ok"));
    summary.insert("eps_star".into(), number(result.eps_star));
    summary.insert("eps_max".into(), number(result.eps_max));
    summary.insert("basin_exceeds_probe".into(), json!(result.basin_exceeds_probe));
    summary.insert("below_probe".into(), json!(result.below_probe));
    summary.insert("probes".into(), json!(result.probes.len()));
    say(opts, format!("threshold eps* = {:.6e}", result.eps_star));
    Ok((EXIT_OK, summary))
}

fn probe_summary(dir: &Path, eps: f64, t: &Termination, outcome: Option<&RunOutcome>, err: &mut Option<ExecError>) {
    if err.is_some() {
        return;
    }
    let mut m = Map::new();
    m.insert("eps".into(), number(eps));
    m.insert("termination".into(), json!(t.name()));
    m.insert("termination_detail".into(), t.detail().map(Value::from).unwrap_or(Value::Null));
    if let Some(o) = outcome {
        m.insert("steps".into(), json!(o.state.step_index));
        m.insert("final_t".into(), number(o.state.t));
        m.insert("final_max_dev".into(), number(o.max_dev));
        m.insert("r_ref".into(), opt_number(o.r_ref));
        m.insert("max_rho_dev".into(), opt_number(o.sup_dev));
    }
    if let Err(e) = fs::create_dir_all(dir) {
        *err = Some(ExecError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        });
        return;
    }
    if let Err(e) = write_summary(dir, &m) {
        *err = Some(e);
    }
}
