//! Run specification: a single strict JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use cmcflow::ambient::AmbientMetric;
use cmcflow::flow::{FlowConfig, FlowKind, TimeStep};
use cmcflow::stability::{Constraint, Variant};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {message}")]
    Missing { path: String, message: String },
    #[error("malformed JSON in {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("unknown key `{key}` at `{location}`")]
    UnknownKey { key: String, location: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("`{key}` out of range: {message}")]
    Range { key: String, message: String },
}

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Flow,
    Spectrum,
    Geometry,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Spectrum => "spectrum",
            Command::Geometry => "geometry",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    pub mass: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: String,
}

fn default_n() -> usize {
    2
}

fn default_perturbation() -> String {
    "none".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub l: usize,
    pub m: i32,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_band_limit")]
    pub band_limit: usize,
    pub r0: f64,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    /// Starting surface read from a snapshot; overrides `r0`, `modes` and `band_limit`.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

fn default_band_limit() -> usize {
    24
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    Vpmcf,
    Apmcf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSpec {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFieldSpec {
    MaxDev,
    L2Dev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    pub kind: KindSpec,
    pub dt: DtSpec,
    pub c_cfl: f64,
    pub t_max: f64,
    pub tol_h: f64,
    pub dealias: bool,
    pub volume_renorm: bool,
    pub graph_eps: f64,
    pub max_steps: Option<usize>,
    pub fit_field: FitFieldSpec,
}

impl Default for FlowSpec {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            kind: KindSpec::Vpmcf,
            dt: DtSpec::Named("auto".into()),
            c_cfl: cmcflow::flow::DEFAULT_C_CFL,
            t_max: d.t_max,
            tol_h: d.tol_h,
            dealias: d.dealias,
            volume_renorm: d.volume_renorm,
            graph_eps: d.graph_eps,
            max_steps: None,
            fit_field: FitFieldSpec::MaxDev,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub record_every: usize,
    /// Snapshot cadence in steps; 0 writes only the initial and final surfaces.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("cmcflow-out"),
            record_every: 1,
            snapshot_every: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSpec {
    Full,
    #[serde(rename = "paper_L")]
    PaperL,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintSpec {
    Volume,
    Area,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub l_op: usize,
    pub variant: VariantSpec,
    pub constraint: ConstraintSpec,
    pub cmc_tol: f64,
    pub umbilic_tol: f64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self {
            l_op: 12,
            variant: VariantSpec::Full,
            constraint: ConstraintSpec::Volume,
            cmc_tol: 1e-8,
            umbilic_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepModeSpec {
    pub l: usize,
    pub m: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub mode: SweepModeSpec,
    pub eps_min: f64,
    pub bisection_steps: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            mode: SweepModeSpec { l: 2, m: 0 },
            eps_min: 1e-3,
            bisection_steps: cmcflow::flow::SWEEP_BISECTIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub command: Option<Command>,
    pub metric: MetricSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Present: the flow command also reports the linearized spectrum at its limit.
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Reserved; every default is deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    pub fn build_metric(&self) -> Result<AmbientMetric, ConfigError> {
        let m = AmbientMetric::schwarzschild(self.metric.n, self.metric.mass)
            .map_err(|e| range("metric.n", e.to_string()))?;
        m.with_named_perturbation(&self.metric.perturbation)
            .map_err(|e| ConfigError::Invalid {
                key: "metric.perturbation".into(),
                message: e.to_string(),
            })
    }

    pub fn flow_config(&self) -> FlowConfig {
        let f = &self.flow;
        FlowConfig {
            kind: match f.kind {
                KindSpec::Vpmcf => FlowKind::Volume,
                KindSpec::Apmcf => FlowKind::Area,
            },
            time_step: match f.dt {
                DtSpec::Fixed(dt) => TimeStep::Fixed(dt),
                DtSpec::Named(_) => TimeStep::Auto { c_cfl: f.c_cfl },
            },
            t_max: f.t_max,
            tol_h: f.tol_h,
            dealias: f.dealias,
            volume_renorm: f.volume_renorm,
            graph_eps: f.graph_eps,
            max_steps: f.max_steps,
            record_every: self.output.record_every,
        }
    }

    pub fn spectrum_or_default(&self) -> SpectrumSpec {
        self.spectrum.clone().unwrap_or_default()
    }

    pub fn sweep_or_default(&self) -> SweepSpec {
        self.sweep.clone().unwrap_or_default()
    }

    fn validate(&mut self, base_dir: &Path) -> Result<(), ConfigError> {
        let m = &self.metric;
        if m.n != 2 {
            return Err(range(
                "metric.n",
                format!("n = {} is not supported; the spherical grid discretizes n = 2 only", m.n),
            ));
        }
        if !(m.mass >= 0.0 && m.mass.is_finite()) {
            return Err(range("metric.mass", format!("mass {} must be finite and nonnegative", m.mass)));
        }
        let metric = self.build_metric()?;
        let rh = metric.horizon_radius();

        let init = &mut self.initial;
        if !(2..=128).contains(&init.band_limit) {
            return Err(range(
                "initial.band_limit",
                format!("{} is outside [2, 128]", init.band_limit),
            ));
        }
        if !(init.r0.is_finite() && init.r0 > rh) {
            return Err(range(
                "initial.r0",
                format!(
                    "r0 = {} must exceed the horizon radius {rh} (mass {}, n {})",
                    init.r0, m.mass, m.n
                ),
            ));
        }
        for (i, mode) in init.modes.iter().enumerate() {
            if mode.l > init.band_limit {
                return Err(range(
                    &format!("initial.modes[{i}].l"),
                    format!("degree {} exceeds band_limit {}", mode.l, init.band_limit),
                ));
            }
            if mode.m.unsigned_abs() as usize > mode.l {
                return Err(range(
                    &format!("initial.modes[{i}].m"),
                    format!("|m| = {} exceeds l = {}", mode.m.abs(), mode.l),
                ));
            }
            if !mode.eps.is_finite() {
                return Err(range(&format!("initial.modes[{i}].eps"), "must be finite"));
            }
        }
        if let Some(p) = &init.snapshot {
            let resolved = if p.is_relative() { base_dir.join(p) } else { p.clone() };
            if !resolved.is_file() {
                return Err(ConfigError::Invalid {
                    key: "initial.snapshot".into(),
                    message: format!("file {} does not exist", resolved.display()),
                });
            }
            init.snapshot = Some(resolved);
        }

        let f = &self.flow;
        match &f.dt {
            DtSpec::Fixed(dt) if !(*dt > 0.0 && dt.is_finite()) => {
                return Err(range("flow.dt", format!("{dt} must be positive")))
            }
            DtSpec::Named(s) if s != "auto" => {
                return Err(ConfigError::Invalid {
                    key: "flow.dt".into(),
                    message: format!("expected a positive number or \"auto\", found \"{s}\""),
                })
            }
            _ => {}
        }
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(range(key, format!("{v} must be positive and finite")))
            }
        };
        positive("flow.c_cfl", f.c_cfl)?;
        positive("flow.t_max", f.t_max)?;
        positive("flow.tol_h", f.tol_h)?;
        if !(f.graph_eps >= 0.0 && f.graph_eps < 1.0) {
            return Err(range("flow.graph_eps", format!("{} is outside [0, 1)", f.graph_eps)));
        }
        if f.volume_renorm && f.kind != KindSpec::Vpmcf {
            return Err(range("flow.volume_renorm", "applies to kind \"vpmcf\" only"));
        }
        if self.output.record_every == 0 {
            return Err(range("output.record_every", "must be at least 1"));
        }
        if let Some(s) = &self.spectrum {
            if s.l_op == 0 || s.l_op > self.initial.band_limit {
                return Err(range(
                    "spectrum.l_op",
                    format!("{} is outside [1, band_limit = {}]", s.l_op, self.initial.band_limit),
                ));
            }
            positive("spectrum.cmc_tol", s.cmc_tol)?;
            positive("spectrum.umbilic_tol", s.umbilic_tol)?;
        }
        if let Some(s) = &self.sweep {
            if s.mode.l == 0 || s.mode.l > self.initial.band_limit || s.mode.m.unsigned_abs() as usize > s.mode.l {
                return Err(range(
                    "sweep.mode",
                    format!("({}, {}) is not a nonconstant harmonic of band limit {}", s.mode.l, s.mode.m, self.initial.band_limit),
                ));
            }
            positive("sweep.eps_min", s.eps_min)?;
            if !(1..=64).contains(&s.bisection_steps) {
                return Err(range("sweep.bisection_steps", format!("{} is outside [1, 64]", s.bisection_steps)));
            }
        }
        Ok(())
    }
}

pub fn variant_of(s: VariantSpec) -> Variant {
    match s {
        VariantSpec::Full => Variant::Full,
        VariantSpec::PaperL => Variant::PaperL,
    }
}

pub fn constraint_of(s: ConstraintSpec) -> Constraint {
    match s {
        ConstraintSpec::Volume => Constraint::Volume,
        ConstraintSpec::Area => Constraint::Area,
        ConstraintSpec::None => Constraint::None,
    }
}

/// Parse and validate a config document. Relative snapshot paths resolve
/// against `base_dir`.
pub fn parse_str(text: &str, origin: &str, base_dir: &Path) -> Result<RunSpec, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut spec: RunSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let location = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        if inner.is_syntax() || inner.is_eof() {
            return ConfigError::Syntax {
                path: origin.into(),
                message,
            };
        }
        if let Some(rest) = message.strip_prefix("unknown field `") {
            let key = rest.split('`').next().unwrap_or_default().to_string();
            let location = location
                .rsplit_once('.')
                .map(|(parent, _)| parent.to_string())
                .unwrap_or_else(|| "top level".into());
            return ConfigError::UnknownKey { key, location };
        }
        ConfigError::Invalid { key: location, message }
    })?;
    spec.validate(base_dir)?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<RunSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Missing {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_str(&text, &path.display().to_string(), base)
}
