//! Experiment configuration: TOML file, `--set` overrides, scenario defaults
//! and validation.

use std::f64::consts::TAU;
use std::path::Path;

use pscurv::csf::{ConvexCurve, CsfOptions};
use pscurv::evolution::{EvolveOptions, Sampling, SourceTerm};
use pscurv::extension::ExtensionOptions;
use pscurv::scenarios::{Preset, ScenarioKind, TailSampling};
use pscurv::{Frame, FrameKind, GridSpec, ScalarField, StationaryOptions, TorusGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("--set {entry}: {reason}")]
    Override { entry: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// `base + amplitude · cos(wavenumber · θ_axis)`, or a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    Cosine {
        base: f64,
        amplitude: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default = "one")]
        wavenumber: u32,
    },
}

fn one() -> u32 {
    1
}

impl Profile {
    pub fn min(&self) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Cosine { base, amplitude, .. } => base - amplitude.abs(),
        }
    }

    pub fn field(&self, grid: &TorusGrid) -> ScalarField {
        match *self {
            Profile::Constant { value } => grid.constant(value),
            Profile::Cosine {
                base,
                amplitude,
                axis,
                wavenumber,
            } => grid.field_from_fn(|x| base + amplitude * (wavenumber as f64 * x[axis]).cos()),
        }
    }

    fn validate(&self, field: &str, dim: usize) -> Result<(), ConfigError> {
        if let Profile::Cosine { axis, .. } = *self {
            if axis >= dim {
                return Err(invalid(&format!("{field}.axis"), format!("axis {axis} on a {dim}-torus")));
            }
        }
        let m = self.min();
        if !(m.is_finite() && m > 0.0) {
            return Err(invalid(field, format!("must be positive everywhere (minimum {m})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveConfig {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Scenario default when absent.
    pub points_per_axis: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            points_per_axis: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub kind: FrameKind,
    pub n: u32,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Constant sources checked against `1/√(2f)` by the `stationary` sweep.
    pub constants: Vec<f64>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        let d = StationaryOptions::default();
        Self {
            tol: d.tol,
            max_iters: d.max_iters,
            constants: vec![0.5, 1.0, 2.0],
        }
    }
}

impl StationaryConfig {
    pub fn options(&self) -> StationaryOptions {
        StationaryOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            ..StationaryOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub harnack_h: f64,
    pub simon_pairs: usize,
    pub simon_amplitude: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            harnack_h: 1.0,
            simon_pairs: 100,
            simon_amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    Binary,
    Csv,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Keep every `stride`-th sample in trajectory CSVs.
    pub stride: usize,
    pub snapshots: SnapshotFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            snapshots: SnapshotFormat::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    /// Check names that are reported but do not affect the exit status.
    pub disabled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub grid: GridConfig,
    pub frame: Option<FrameConfig>,
    pub source: Option<Profile>,
    pub initial: Option<Profile>,
    pub t_end: Option<f64>,
    pub solver: Option<EvolveOptions>,
    pub curve: Option<CurveConfig>,
    pub csf: Option<CsfOptions>,
    /// Scenario default when absent.
    pub tail: Option<TailSampling>,
    pub extension: ExtensionOptions,
    pub stationary: StationaryConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
    pub checks: ChecksConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::TrivialOde,
            seed: 0,
            grid: GridConfig::default(),
            frame: None,
            source: None,
            initial: None,
            t_end: None,
            solver: None,
            curve: None,
            csf: None,
            tail: None,
            extension: ExtensionOptions::default(),
            stationary: StationaryConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: OutputConfig::default(),
            checks: ChecksConfig::default(),
        }
    }
}

/// A PDE problem with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSetup {
    pub preset: Preset,
    pub source_profile: Profile,
    pub solver: EvolveOptions,
}

/// A curve-shortening problem with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct CsfSetup {
    pub curve: ConvexCurve,
    pub options: CsfOptions,
}

pub fn is_csf(kind: ScenarioKind) -> bool {
    matches!(kind, ScenarioKind::CsfCircle | ScenarioKind::CsfEllipse)
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key.path=value` overrides and validates.
    pub fn from_toml(text: &str, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse {
            path: origin.into(),
            message: e.to_string(),
        };
        // typed parse of the text first, so errors carry line and column
        toml::from_str::<ExperimentConfig>(text).map_err(parse_err)?;
        let mut table: toml::Table = text.parse().map_err(parse_err)?;
        for entry in overrides {
            apply_override(&mut table, entry)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: format!("{origin} with --set overrides"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text, &p.display().to_string(), overrides)
            }
            None => Self::from_toml("", "<defaults>", overrides),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn points(&self) -> usize {
        self.grid.points_per_axis.unwrap_or(match self.scenario {
            ScenarioKind::TrivialOde => 64,
            ScenarioKind::ConstantFTau | ScenarioKind::PerturbedF | ScenarioKind::Custom => 32,
            ScenarioKind::CsfCircle | ScenarioKind::CsfEllipse => 128,
        })
    }

    fn grid_spec(&self) -> GridSpec {
        GridSpec {
            dim: self.grid.dim,
            points_per_axis: self.points(),
            period: TAU,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid_spec()
            .validate()
            .map_err(|e| invalid("grid", e.to_string()))?;
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("t_end", "must be positive"));
            }
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| invalid("solver", e.to_string()))?;
        }
        if let Some(c) = &self.csf {
            c.validate().map_err(|e| invalid("csf", e.to_string()))?;
        }
        if self.output.stride == 0 {
            return Err(invalid("output.stride", "must be at least 1"));
        }
        let t = &self.tail();
        if !(t.eps_min > 0.0 && t.eps_min <= t.eps_max && t.eps_max < 1.0 && t.per_decade > 0) {
            return Err(invalid("tail", "need 0 < eps_min <= eps_max < 1 and per_decade >= 1"));
        }
        if !(self.stationary.tol > 0.0) {
            return Err(invalid("stationary.tol", "must be positive"));
        }
        if let Some(c) = self.stationary.constants.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid("stationary.constants", format!("{c} is not a positive source")));
        }
        let d = &self.diagnostics;
        if !(d.harnack_h > 0.0 && d.simon_amplitude > 0.0) {
            return Err(invalid("diagnostics", "harnack_h and simon_amplitude must be positive"));
        }
        if is_csf(self.scenario) {
            if self.grid.dim != 2 {
                return Err(invalid("grid.dim", "the curve lift lives on the 2-torus"));
            }
            self.csf_setup()?;
        } else {
            self.pde_setup()?;
        }
        Ok(())
    }

    pub fn pde_setup(&self) -> Result<PdeSetup, ConfigError> {
        use ScenarioKind::*;
        let grid = TorusGrid::from_spec(self.grid_spec()).map_err(|e| invalid("grid", e.to_string()))?;
        let (frame, source, initial, t_end, interval) = match self.scenario {
            TrivialOde => (
                FrameConfig { kind: FrameKind::T, n: 3, r0: 1.0 },
                Profile::Constant { value: 0.5 },
                Profile::Constant { value: 1.0 },
                3.0,
                0.01,
            ),
            ConstantFTau => (
                FrameConfig { kind: FrameKind::Tau, n: 3, r0: 1.0 },
                Profile::Constant { value: 0.5 },
                Profile::Cosine { base: 1.0, amplitude: 0.3, axis: 0, wavenumber: 1 },
                20.0,
                0.1,
            ),
            PerturbedF => (
                FrameConfig { kind: FrameKind::Tau, n: 3, r0: 1.0 },
                Profile::Cosine { base: 1.0, amplitude: 0.1, axis: 0, wavenumber: 1 },
                Profile::Constant { value: 1.0 },
                20.0,
                0.02,
            ),
            Custom => {
                let need = |name: &str| invalid(name, "required for the CUSTOM scenario");
                (
                    self.frame.ok_or_else(|| need("frame"))?,
                    self.source.ok_or_else(|| need("source"))?,
                    self.initial.ok_or_else(|| need("initial"))?,
                    self.t_end.ok_or_else(|| need("t_end"))?,
                    0.01,
                )
            }
            CsfCircle | CsfEllipse => return Err(invalid("scenario", "curve scenarios have no PDE setup")),
        };
        let frame = self.frame.unwrap_or(frame);
        let source = self.source.unwrap_or(source);
        let initial = self.initial.unwrap_or(initial);
        source.validate("source", grid.dim())?;
        initial.validate("initial", grid.dim())?;
        let fr = match frame.kind {
            FrameKind::Tau => Frame::tau_frame(frame.n, frame.r0),
            kind => Frame::new(kind, frame.n, frame.r0, None),
        }
        .map_err(|e| invalid("frame", e.to_string()))?;
        let src = match source {
            Profile::Constant { value } => SourceTerm::constant(value),
            p => SourceTerm::field(p.field(&grid)),
        }
        .map_err(|e| invalid("source", e.to_string()))?;
        let t_end = self.t_end.unwrap_or(t_end);
        let start = fr.start_time().map_err(|e| invalid("frame", e.to_string()))?;
        if !(t_end > start) {
            return Err(invalid("t_end", format!("{t_end} does not exceed the start time {start}")));
        }
        let solver = self.solver.clone().unwrap_or_else(|| {
            let precise = self.scenario == TrivialOde;
            EvolveOptions {
                rel_tol: if precise { 1e-10 } else { 1e-8 },
                abs_tol: 1e-12,
                sampling: Sampling {
                    interval: Some(interval),
                    ..Sampling::default()
                },
                ..EvolveOptions::default()
            }
        });
        Ok(PdeSetup {
            preset: Preset {
                frame: fr,
                initial: initial.field(&grid),
                source: src,
                t_end,
            },
            source_profile: source,
            solver,
        })
    }

    /// Curve scenarios sample down to `ε = 1e−8` so that the extension limit
    /// is read off where `v` is within round-off of its limit.
    pub fn tail(&self) -> TailSampling {
        self.tail.unwrap_or(if is_csf(self.scenario) {
            TailSampling {
                eps_min: 1e-8,
                ..TailSampling::default()
            }
        } else {
            TailSampling::default()
        })
    }

    /// The configured levels continued by decades down to ten times the
    /// deepest tail sample, where the limit is read off.
    pub fn limit_extension(&self) -> ExtensionOptions {
        let floor = 10.0 * self.tail().eps_min;
        let mut levels = self.extension.eps_levels.clone();
        let mut eps = levels.iter().copied().fold(f64::INFINITY, f64::min) / 10.0;
        while eps >= floor * (1.0 - 1e-9) {
            levels.push(eps);
            eps /= 10.0;
        }
        ExtensionOptions {
            eps_levels: levels,
            ..self.extension.clone()
        }
    }

    /// The curve of a curve scenario, with the scenario default filled in.
    pub fn curve_config(&self) -> CurveConfig {
        self.curve.unwrap_or(match self.scenario {
            ScenarioKind::CsfCircle => CurveConfig::Circle { radius: 1.0 },
            _ => CurveConfig::Ellipse { a: 2.0, b: 1.0 },
        })
    }

    pub fn csf_setup(&self) -> Result<CsfSetup, ConfigError> {
        let n = self.points();
        let curve = match self.curve_config() {
            CurveConfig::Circle { radius } => ConvexCurve::circle(radius, n),
            CurveConfig::Ellipse { a, b } => ConvexCurve::ellipse(a, b, n),
        }
        .map_err(|e| invalid("curve", e.to_string()))?;
        // the deepest tail level needs k ≈ 1/√(2ε t₁) ≈ 7e3 before the stop
        let options = self.csf.clone().unwrap_or_else(|| CsfOptions {
            sampling: Sampling {
                interval: Some(0.01 * curve.extinction_time()),
                ..Sampling::default()
            },
            curvature_threshold: 1e4,
            ..CsfOptions::default()
        });
        Ok(CsfSetup { curve, options })
    }
}

/// `a.b.c=value`, with `value` parsed as a TOML value and taken as a bare
/// string when that fails.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<(), ConfigError> {
    let bad = |reason: &str| ConfigError::Override {
        entry: entry.into(),
        reason: reason.into(),
    };
    let (key, raw) = entry.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.into()),
    };
    let mut cur = table;
    for seg in &path[..path.len() - 1] {
        let slot = cur
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = slot.as_table_mut().ok_or_else(|| bad(&format!("`{seg}` is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
