//! Experiment configuration: JSON on disk, merged over per-experiment
//! defaults, then patched by dotted `key=value` overrides.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use tidalfem::fem::build_space;
use tidalfem::{CoefficientField, Family, Mesh, Model, ModelParams, Scheme};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Energy,
    Damping,
    Mms,
    Spinup,
    Simulate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Energy => "energy",
            Experiment::Damping => "damping",
            Experiment::Mms => "mms",
            Experiment::Spinup => "spinup",
            Experiment::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshSpec {
    Icosphere {
        level: usize,
        /// Polynomial degree of the cell maps; defaults to the element order.
        #[serde(default)]
        geometry_degree: Option<u8>,
    },
    Rect {
        nx: usize,
        ny: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKeyword {
    /// The `z` coordinate, i.e. the sine of the latitude on the unit sphere.
    Z,
    /// `1 + 0.1 exp(−x²)`.
    Bump,
}

/// A scalar coefficient: a number, a keyword, or a Gaussian bump in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Keyword(FieldKeyword),
    Bump { base: f64, amplitude: f64 },
}

impl FieldSpec {
    pub fn to_field(&self) -> CoefficientField<f64> {
        match *self {
            FieldSpec::Constant(c) => CoefficientField::Constant(c),
            FieldSpec::Keyword(FieldKeyword::Z) => CoefficientField::from_fn(|x: &[f64; 3]| x[2]),
            FieldSpec::Keyword(FieldKeyword::Bump) => bump(1.0, 0.1),
            FieldSpec::Bump { base, amplitude } => bump(base, amplitude),
        }
    }
}

fn bump(base: f64, amplitude: f64) -> CoefficientField<f64> {
    CoefficientField::from_fn(move |x: &[f64; 3]| base + amplitude * (-x[0] * x[0]).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub f: FieldSpec,
    pub drag: FieldSpec,
    pub depth: FieldSpec,
    pub depth_min: f64,
}

impl ParamsConfig {
    pub fn to_params(&self) -> ModelParams<f64> {
        ModelParams::new(self.epsilon, self.beta)
            .with_coriolis(self.f.to_field())
            .with_drag(self.drag.to_field())
            .with_depth(self.depth.to_field(), self.depth_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Midpoint,
    Symplectic,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Midpoint => Scheme::ImplicitMidpoint,
            SchemeName::Symplectic => Scheme::SymplecticEuler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    /// `u = 0`, `η = xyz`.
    Tide,
    /// Seeded uniform coefficients with zero-mean elevation.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    None,
    /// `(β/ε²) sin(t) (xyz, ∇·v)`.
    Tidal,
    /// `(β/ε²)(η̄, ∇·v)` for a bathymetric elevation η̄.
    Bathymetry { eta_bar: FieldSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    pub omega: f64,
    /// Refinement levels; empty means 1–4 for order 1 and 1–3 for order 2.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub mesh: MeshSpec,
    pub order: usize,
    pub params: ParamsConfig,
    pub scheme: SchemeName,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialKind,
    pub forcing: ForcingConfig,
    pub seeds: [u64; 2],
    /// Start of the log-linear fit window for damping and spin-up.
    pub fit_start: f64,
    pub mms: MmsConfig,
    /// Relative tolerance of the per-step linear solves.
    pub solver_tol: f64,
    /// Write `frame_%05d.vtk` every this many steps; 0 disables frames.
    pub vtk_every: usize,
}

/// Defaults for each experiment, matching the published parameter sets.
pub fn defaults(experiment: Experiment) -> Value {
    let mut v = json!({
        "experiment": experiment.name(),
        "mesh": { "kind": "icosphere", "level": 2 },
        "order": 1,
        "params": {
            "epsilon": 0.1,
            "beta": 0.1,
            "f": 1.0,
            "drag": 0.0,
            "depth": "bump",
            "depth_min": 1.0
        },
        "scheme": "midpoint",
        "dt": 0.01,
        "t_end": 1.0,
        "initial": "tide",
        "forcing": { "kind": "none" },
        "seeds": [1, 2],
        "fit_start": 10.0,
        "mms": { "omega": 2.0, "levels": [] },
        "solver_tol": 1e-12,
        "vtk_every": 0
    });
    let patch = match experiment {
        Experiment::Energy | Experiment::Simulate => json!({}),
        Experiment::Damping => json!({ "params": { "drag": 0.01 }, "dt": 0.05, "t_end": 50.0 }),
        Experiment::Mms => json!({
            "params": { "drag": 1000.0, "depth": 1.0 },
            "dt": 1e-3,
            "t_end": 0.3,
            "initial": "zero"
        }),
        Experiment::Spinup => json!({
            "params": { "drag": 10.0 },
            "t_end": 10.0,
            "initial": "random",
            "forcing": { "kind": "tidal" },
            "fit_start": 2.0
        }),
    };
    merge(&mut v, patch);
    v
}

/// Recursive object merge; non-object values in `patch` replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON when it can be,
/// otherwise taken as a string.
pub fn apply_override(config: &mut Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override '{spec}' is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::config(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), patch);
        patch = Value::Object(m);
    }
    // A replaced tagged object (e.g. mesh kind) must not inherit stale fields.
    if let Some((parent, "kind")) = key.rsplit_once('.') {
        if let Some(slot) = config.pointer_mut(&format!("/{}", parent.replace('.', "/"))) {
            *slot = Value::Object(Map::new());
        }
    }
    merge(config, patch);
    Ok(())
}

impl ExperimentConfig {
    /// Defaults for `experiment`, then the file (if any), then overrides.
    pub fn resolve(experiment: Experiment, file: Option<&Value>, overrides: &[String]) -> CliResult<Self> {
        let mut v = defaults(experiment);
        if let Some(f) = file {
            if !f.is_object() {
                return Err(CliError::config("config file must hold a JSON object"));
            }
            merge(&mut v, f.clone());
        }
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| CliError::config(e.to_string()))?;
        if cfg.experiment != experiment {
            return Err(CliError::config(format!(
                "config is for '{}' but the command is '{}'",
                cfg.experiment.name(),
                experiment.name()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: Experiment, path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Some(serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        Self::resolve(experiment, file.as_ref(), overrides)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CliError::config("dt must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(CliError::config("t_end must be nonnegative"));
        }
        if !matches!(self.order, 1 | 2) {
            return Err(CliError::config("order must be 1 or 2"));
        }
        if !(self.solver_tol > 0.0) {
            return Err(CliError::config("solver_tol must be positive"));
        }
        if let MeshSpec::Icosphere { geometry_degree: Some(d), .. } = self.mesh {
            if !matches!(d, 1 | 2) {
                return Err(CliError::config("geometry_degree must be 1 or 2"));
            }
        }
        self.params.to_params().validate()?;
        if let FieldSpec::Constant(h) = self.params.depth {
            if h < self.params.depth_min {
                return Err(CliError::config(format!("depth {h} is below depth_min {}", self.params.depth_min)));
            }
        }
        if let FieldSpec::Constant(c) = self.params.drag {
            if c < 0.0 {
                return Err(CliError::config("drag must be nonnegative"));
            }
        }
        if self.experiment == Experiment::Mms {
            if !matches!(self.mesh, MeshSpec::Icosphere { .. }) {
                return Err(CliError::config("the manufactured solution lives on the sphere"));
            }
            if self.mms.omega < 0.0 {
                return Err(CliError::config("mms.omega must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn mms_levels(&self) -> Vec<usize> {
        if !self.mms.levels.is_empty() {
            self.mms.levels.clone()
        } else if self.order == 1 {
            (1..=4).collect()
        } else {
            (1..=3).collect()
        }
    }

    fn geometry_degree(&self) -> u8 {
        match self.mesh {
            MeshSpec::Icosphere { geometry_degree: Some(d), .. } => d,
            _ => self.order as u8,
        }
    }

    /// The configured mesh, or the sphere at `level` when given.
    pub fn build_mesh(&self, level: Option<usize>) -> CliResult<Arc<Mesh<f64>>> {
        let mesh = match (&self.mesh, level) {
            (MeshSpec::Rect { nx, ny }, None) => Mesh::rect(*nx, *ny)?,
            (MeshSpec::Icosphere { level, .. }, None) => Mesh::icosphere(*level, self.geometry_degree())?,
            (_, Some(l)) => Mesh::icosphere(l, self.geometry_degree())?,
        };
        Ok(Arc::new(mesh))
    }

    pub fn build_model(&self, mesh: &Arc<Mesh<f64>>) -> CliResult<Model<f64>> {
        let v = build_space(mesh, Family::Rt, self.order)?;
        let w = build_space(mesh, Family::Dg, self.order - 1)?;
        Ok(Model::new(v, w, self.params.to_params())?)
    }
}
