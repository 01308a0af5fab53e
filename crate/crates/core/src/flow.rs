//! Volume- and area-preserving mean curvature flow of radial graphs.
//!
//! The normal speed is `avg − H`, with `avg` the area mean of `H` (volume
//! preserving) or `∫H²/∫H` (area preserving). On a radial graph the normal
//! speed `f` is realised by `∂_t ρ = f / χ`.

use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::surface::{
    enclosed_volume, geometry_with, perturb, sphere_of_area, sphere_of_volume, unit_harmonic, GeometryFields,
    GeometryOptions, RadialGraph, SphCoeffs, DEFAULT_GRAPH_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    /// Volume preserving: speed `h − H` with `h = ∫H dμ / |M|`.
    Volume,
    /// Area preserving: speed `h₀ − H` with `h₀ = ∫H² dμ / ∫H dμ`.
    Area,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Volume => "vpmcf",
            FlowKind::Area => "apmcf",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// `dt = c_cfl · (min node spacing)² / max(max|A|², 1)`, re-evaluated every step.
    Auto { c_cfl: f64 },
}

pub const DEFAULT_C_CFL: f64 = 0.5;
pub const DEFAULT_TOL_H: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub time_step: TimeStep,
    pub t_max: f64,
    /// Converged once `max|H − avg| < tol_h`.
    pub tol_h: f64,
    /// Truncate ρ to degree ≤ 2L/3 after every step.
    pub dealias: bool,
    /// Shift ρ uniformly after every step to restore the initial volume.
    pub volume_renorm: bool,
    pub graph_eps: f64,
    pub max_steps: Option<usize>,
    /// Observer cadence in steps.
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kind: FlowKind::Volume,
            time_step: TimeStep::Auto { c_cfl: DEFAULT_C_CFL },
            t_max: 100.0,
            tol_h: DEFAULT_TOL_H,
            dealias: true,
            volume_renorm: false,
            graph_eps: DEFAULT_GRAPH_EPS,
            max_steps: None,
            record_every: 1,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return Err(Error::Domain(format!("time step {dt} must be positive")))
            }
            TimeStep::Auto { c_cfl } if !(c_cfl > 0.0 && c_cfl.is_finite()) => {
                return Err(Error::Domain(format!("c_cfl {c_cfl} must be positive")))
            }
            _ => {}
        }
        if !(self.tol_h > 0.0) {
            return Err(Error::Domain(format!("tol_h {} must be positive", self.tol_h)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::Domain(format!("t_max {} must be finite and nonnegative", self.t_max)));
        }
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be at least 1".into()));
        }
        if self.volume_renorm && self.kind != FlowKind::Volume {
            return Err(Error::Domain("volume_renorm applies to the volume-preserving flow only".into()));
        }
        Ok(())
    }

    fn geometry_options(&self) -> GeometryOptions {
        GeometryOptions {
            graph_eps: self.graph_eps,
        }
    }
}

/// The evolving surface with its current geometry.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub graph: RadialGraph,
    pub kind: FlowKind,
    pub t: f64,
    pub step_index: usize,
    pub fields: GeometryFields,
}

impl FlowState {
    pub fn new(graph: RadialGraph, config: &FlowConfig) -> Result<Self> {
        let fields = geometry_with(&graph, &config.geometry_options())?;
        Ok(Self {
            graph,
            kind: config.kind,
            t: 0.0,
            step_index: 0,
            fields,
        })
    }

    pub fn average_speed(&self) -> Result<f64> {
        speed_average(&self.fields, self.kind)
    }

    /// `max|H − avg|`.
    pub fn max_deviation(&self) -> Result<f64> {
        let avg = self.average_speed()?;
        Ok(self
            .fields
            .nodes()
            .iter()
            .map(|n| (n.mean_curvature - avg).abs())
            .fold(0.0, f64::max))
    }
}

/// `h` or `h₀` from nodal mean curvature and area elements.
pub fn average_of(h: &[f64], dmu: &[f64], kind: FlowKind) -> Result<f64> {
    use crate::numerics::pairwise_sum;
    let int_h = pairwise_sum(&h.iter().zip(dmu).map(|(a, b)| a * b).collect::<Vec<_>>());
    match kind {
        FlowKind::Volume => Ok(int_h / pairwise_sum(dmu)),
        FlowKind::Area => {
            if !(int_h > 0.0) {
                return Err(Error::FlowUndefined { integral: int_h });
            }
            let int_h2 = pairwise_sum(&h.iter().zip(dmu).map(|(a, b)| a * a * b).collect::<Vec<_>>());
            Ok(int_h2 / int_h)
        }
    }
}

pub fn speed_average(fields: &GeometryFields, kind: FlowKind) -> Result<f64> {
    average_of(&fields.mean_curvature(), &fields.area_elements(), kind)
}

/// `∂_t ρ = f / χ` for a normal speed `f`.
pub fn radial_velocity(fields: &GeometryFields, f: &[f64]) -> Result<Vec<f64>> {
    let eps = fields.graph_eps();
    if let Some((i, n)) = fields.nodes().iter().enumerate().find(|(_, n)| !(n.chi > eps)) {
        return Err(Error::GraphCondition {
            node: fields.grid().node_index(i),
            chi: n.chi,
            threshold: eps,
        });
    }
    Ok(fields.nodes().iter().zip(f).map(|(n, v)| v / n.chi).collect())
}

fn velocity(fields: &GeometryFields, kind: FlowKind) -> Result<Vec<f64>> {
    let avg = speed_average(fields, kind)?;
    let f: Vec<f64> = fields.nodes().iter().map(|n| avg - n.mean_curvature).collect();
    radial_velocity(fields, &f)
}

/// Automatic step from the smallest metric node spacing and the curvature scale.
pub fn auto_time_step(graph: &RadialGraph, fields: &GeometryFields, c_cfl: f64) -> f64 {
    let grid = graph.grid();
    let theta = grid.theta();
    let dphi = 2.0 * std::f64::consts::PI / grid.n_phi() as f64;
    let n_phi = grid.n_phi();
    let mut spacing = f64::INFINITY;
    for (node, &rho) in graph.rho().iter().enumerate() {
        let j = node / n_phi;
        let dtheta_prev = if j > 0 { (theta[j] - theta[j - 1]).abs() } else { theta[j] };
        let dtheta_next = if j + 1 < theta.len() {
            (theta[j + 1] - theta[j]).abs()
        } else {
            std::f64::consts::PI - theta[j]
        };
        let angle = dtheta_prev.min(dtheta_next).min(grid.sin_theta()[j] * dphi);
        // conformal length scale; perturbations are small corrections to it
        let (phi, _) = graph.metric().radial_conformal_factor(rho);
        spacing = spacing.min(rho * phi * phi * angle);
    }
    let a2 = fields.nodes().iter().map(|n| n.a_norm2).fold(0.0, f64::max);
    c_cfl * spacing * spacing / a2.max(1.0)
}

fn dealiased(graph: &RadialGraph, rho: Vec<f64>) -> Vec<f64> {
    let grid = graph.grid();
    let mut c: SphCoeffs = grid.analyze(&rho);
    c.truncate(grid.dealias_degree());
    grid.synthesize(&c)
}

/// `dV/dc` for a uniform radial shift: `∫ √det ḡ(ρω) ρ² dω`.
fn volume_shift_rate(graph: &RadialGraph) -> f64 {
    let grid = graph.grid();
    let n_phi = grid.n_phi();
    let vals: Vec<f64> = graph
        .rho()
        .iter()
        .enumerate()
        .map(|(node, &rho)| {
            let (j, k) = (node / n_phi, node % n_phi);
            let st = grid.sin_theta()[j];
            let (sp, cp) = grid.phi()[k].sin_cos();
            let y = Vector3::new(st * cp, st * sp, grid.cos_theta()[j]) * rho;
            graph.metric().volume_density3(&y) * rho * rho
        })
        .collect();
    grid.integrate(&vals)
}

/// Uniform shift `c` with `Vol(ρ + c) = target`, by Newton.
pub fn renormalize_volume(graph: &RadialGraph, target: f64) -> Result<RadialGraph> {
    let mut g = graph.clone();
    for _ in 0..20 {
        let v = enclosed_volume(&g)?;
        let dv = volume_shift_rate(&g);
        let c = (target - v) / dv;
        g = g.with_rho(g.rho().iter().map(|r| r + c).collect())?;
        if c.abs() <= 1e-15 * g.max_rho() {
            break;
        }
    }
    Ok(g)
}

/// Per-run context for [`step`]: the conserved target for volume renormalization.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepContext {
    pub target_volume: Option<f64>,
}

fn rk4(state: &FlowState, config: &FlowConfig, dt: f64) -> Result<RadialGraph> {
    let opts = config.geometry_options();
    let g0 = &state.graph;
    let rho0 = g0.rho();
    let stage = |k: &[f64], c: f64| -> Result<RadialGraph> {
        g0.with_rho(rho0.iter().zip(k).map(|(r, v)| r + c * v).collect())
    };
    let k1 = velocity(&state.fields, config.kind)?;
    let k2 = velocity(&geometry_with(&stage(&k1, 0.5 * dt)?, &opts)?, config.kind)?;
    let k3 = velocity(&geometry_with(&stage(&k2, 0.5 * dt)?, &opts)?, config.kind)?;
    let k4 = velocity(&geometry_with(&stage(&k3, dt)?, &opts)?, config.kind)?;
    let rho: Vec<f64> = (0..rho0.len())
        .map(|i| rho0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if let Some(i) = rho.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite radius after step at {}",
            g0.grid().node_index(i)
        )));
    }
    let rho = if config.dealias { dealiased(g0, rho) } else { rho };
    g0.with_rho(rho)
}

/// Length of the next step (before clipping to `t_max`).
pub fn next_time_step(state: &FlowState, config: &FlowConfig) -> f64 {
    match config.time_step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Auto { c_cfl } => auto_time_step(&state.graph, &state.fields, c_cfl),
    }
}

/// One RK4 step of length `dt`. A non-finite stage triggers a single retry
/// with `dt/2`; a second failure is reported as a numerical error.
pub fn step(state: &FlowState, config: &FlowConfig, dt: f64, ctx: &StepContext) -> Result<FlowState> {
    let (graph, taken) = match rk4(state, config, dt) {
        Ok(g) => (g, dt),
        Err(Error::Numerical(_)) => match rk4(state, config, 0.5 * dt) {
            Ok(g) => (g, 0.5 * dt),
            Err(Error::Numerical(msg)) => {
                return Err(Error::Numerical(format!("blowup at t={} after halving dt: {msg}", state.t)))
            }
            Err(e) => return Err(e),
        },
        Err(e) => return Err(e),
    };
    let graph = match (config.volume_renorm, ctx.target_volume) {
        (true, Some(v)) => renormalize_volume(&graph, v)?,
        _ => graph,
    };
    let fields = geometry_with(&graph, &config.geometry_options())?;
    Ok(FlowState {
        graph,
        kind: state.kind,
        t: state.t + taken,
        step_index: state.step_index + 1,
        fields,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Converged,
    MaxTime,
    GraphFail(String),
    Blowup(String),
    FlowUndefined(String),
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxTime => "max_time",
            Termination::GraphFail(_) => "graph_fail",
            Termination::Blowup(_) => "blowup",
            Termination::FlowUndefined(_) => "flow_undefined",
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Termination::Converged)
    }

    pub fn detail(&self) -> Option<&str> {
        match self {
            Termination::GraphFail(s) | Termination::Blowup(s) | Termination::FlowUndefined(s) => Some(s),
            _ => None,
        }
    }

    /// Map a stepping error to a termination; other errors are returned.
    fn from_error(e: Error) -> std::result::Result<Self, Error> {
        match e {
            e if e.is_graph_failure() => Ok(Termination::GraphFail(e.to_string())),
            e @ Error::Numerical(_) => Ok(Termination::Blowup(e.to_string())),
            e @ Error::FlowUndefined { .. } => Ok(Termination::FlowUndefined(e.to_string())),
            e => Err(e),
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detail() {
            Some(d) => write!(f, "{}: {d}", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub termination: Termination,
    /// Last valid state (the initial one if stepping never succeeded).
    pub state: FlowState,
    /// Conserved quantity at t = 0: volume for the volume-preserving flow, area otherwise.
    pub conserved_initial: f64,
    pub max_dev: f64,
    /// Coordinate sphere with the same conserved quantity (on convergence).
    pub r_ref: Option<f64>,
    /// `max|ρ − r_ref|` (on convergence).
    pub sup_dev: Option<f64>,
}

fn conserved(graph: &RadialGraph, fields: &GeometryFields, kind: FlowKind) -> Result<f64> {
    match kind {
        FlowKind::Volume => enclosed_volume(graph),
        FlowKind::Area => Ok(fields.area()),
    }
}

/// Run the flow until convergence or another terminal condition. The
/// observer sees the initial state, every `record_every`-th state and the
/// final state (each exactly once).
pub fn run<F>(initial: RadialGraph, config: &FlowConfig, mut observer: F) -> Result<RunOutcome>
where
    F: FnMut(&FlowState) -> Result<()>,
{
    config.validate()?;
    let mut state = match FlowState::new(initial.clone(), config) {
        Ok(s) => s,
        Err(e) => {
            let termination = Termination::from_error(e)?;
            return Err(Error::Precondition(format!("initial surface is invalid: {termination}")));
        }
    };
    let conserved_initial = conserved(&state.graph, &state.fields, config.kind)?;
    let ctx = StepContext {
        target_volume: (config.kind == FlowKind::Volume).then_some(conserved_initial),
    };
    observer(&state)?;
    let mut last_observed = 0;

    let termination = loop {
        let max_dev = match state.max_deviation() {
            Ok(d) => d,
            Err(e) => break Termination::from_error(e)?,
        };
        if !max_dev.is_finite() {
            break Termination::Blowup(format!("non-finite curvature deviation at t={}", state.t));
        }
        if max_dev < config.tol_h {
            break Termination::Converged;
        }
        let remaining = config.t_max - state.t;
        if remaining <= 1e-12 * config.t_max.max(1.0) || config.max_steps.is_some_and(|m| state.step_index >= m) {
            break Termination::MaxTime;
        }
        let dt = next_time_step(&state, config).min(remaining);
        match step(&state, config, dt, &ctx) {
            Ok(next) => state = next,
            Err(e) => break Termination::from_error(e)?,
        }
        if state.step_index % config.record_every == 0 {
            observer(&state)?;
            last_observed = state.step_index;
        }
    };
    if last_observed != state.step_index {
        observer(&state)?;
    }

    let max_dev = state.max_deviation().unwrap_or(f64::NAN);
    let (r_ref, sup_dev) = if termination.is_converged() {
        let metric = state.graph.metric();
        let r = match config.kind {
            FlowKind::Volume => sphere_of_volume(metric, conserved_initial)?,
            FlowKind::Area => sphere_of_area(metric, conserved_initial)?,
        };
        let dev = state.graph.rho().iter().map(|x| (x - r).abs()).fold(0.0, f64::max);
        (Some(r), Some(dev))
    } else {
        (None, None)
    };
    Ok(RunOutcome {
        termination,
        state,
        conserved_initial,
        max_dev,
        r_ref,
        sup_dev,
    })
}

/// Largest ε for which `ρ ≡ r0` perturbed by the mode keeps
/// `min ρ > 1.05 r_h` (or `min ρ > 0.05 r0` without a horizon).
pub fn sweep_eps_max(base: &RadialGraph, mode: (usize, i32)) -> Result<f64> {
    let r0 = base.max_rho();
    if (r0 - base.min_rho()).abs() > 1e-12 * r0 {
        return Err(Error::Domain("sweep base must be a coordinate sphere".into()));
    }
    let y = unit_harmonic(base.grid(), mode.0, mode.1);
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(y_min < 0.0) {
        return Err(Error::Domain(format!(
            "mode ({}, {}) never lowers the surface, so no ε bound exists",
            mode.0, mode.1
        )));
    }
    let rh = base.metric().horizon_radius();
    let floor = if rh > 0.0 { 1.05 * rh } else { 0.05 * r0 };
    Ok((1.0 - floor / r0) / (-y_min))
}

#[derive(Clone, Debug)]
pub struct SweepProbe {
    pub eps: f64,
    pub termination: Termination,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Largest probed ε whose run converged.
    pub eps_star: f64,
    pub eps_max: f64,
    /// The run at `eps_max` converged too.
    pub basin_exceeds_probe: bool,
    /// The run at the lower endpoint did not converge.
    pub below_probe: bool,
    pub probes: Vec<SweepProbe>,
}

pub const SWEEP_BISECTIONS: usize = 8;

/// Bisect on ε between converging and non-converging runs from `base`
/// perturbed by `mode`. `probe` runs one flow and may record its outputs.
pub fn sweep_threshold_with<P>(
    base: &RadialGraph,
    mode: (usize, i32),
    config: &FlowConfig,
    eps_min: f64,
    bisections: usize,
    mut probe: P,
) -> Result<SweepResult>
where
    P: FnMut(f64, &RadialGraph, &FlowConfig) -> Result<Termination>,
{
    let eps_max = sweep_eps_max(base, mode)?;
    if !(eps_min > 0.0 && eps_min < eps_max) {
        return Err(Error::Domain(format!("lower sweep endpoint {eps_min} is not in (0, {eps_max})")));
    }
    let mut probes = Vec::new();
    let mut attempt = |eps: f64, probes: &mut Vec<SweepProbe>| -> Result<bool> {
        let termination = match perturb(base, mode, eps) {
            Ok(g) => probe(eps, &g, config)?,
            Err(e) if e.is_graph_failure() => Termination::GraphFail(e.to_string()),
            Err(e) => return Err(e),
        };
        let ok = termination.is_converged();
        probes.push(SweepProbe { eps, termination });
        Ok(ok)
    };
    if !attempt(eps_min, &mut probes)? {
        return Ok(SweepResult {
            eps_star: eps_min,
            eps_max,
            basin_exceeds_probe: false,
            below_probe: true,
            probes,
        });
    }
    if attempt(eps_max, &mut probes)? {
        return Ok(SweepResult {
            eps_star: eps_max,
            eps_max,
            basin_exceeds_probe: true,
            below_probe: false,
            probes,
        });
    }
    let (mut lo, mut hi) = (eps_min, eps_max);
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if attempt(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SweepResult {
        eps_star: lo,
        eps_max,
        basin_exceeds_probe: false,
        below_probe: false,
        probes,
    })
}

/// [`sweep_threshold_with`] using plain runs and [`SWEEP_BISECTIONS`] steps.
pub fn sweep_threshold(base: &RadialGraph, mode: (usize, i32), config: &FlowConfig, eps_min: f64) -> Result<SweepResult> {
    sweep_threshold_with(base, mode, config, eps_min, SWEEP_BISECTIONS, |_, g, cfg| {
        Ok(run(g.clone(), cfg, |_| Ok(()))?.termination)
    })
}
