//! JSON run configuration: parsing, validation with field paths, and assembly
//! into a [`Problem`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{BoundMode, DEFAULT_K_UNIFORM};
use crate::error::{Error, FieldError, Result};
use crate::flux::{
    flux_bounds, FluxBounds, FluxModel, LinearAdvection, NonlocalLwr, ValidityBox, ZeroFlux,
};
use crate::grid::{AlphaPolicy, Datum, Mesh, ProblemData, Table};
use crate::kernel::{Discretization, Kernel, LookAhead, Triweight};
use crate::solver::{EntropySchedule, Fault, Problem, SolveOptions};

/// Samples used when a flux model has no closed-form bounds.
pub const FLUX_BOUND_SAMPLES: usize = 4096;

const SUP_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaKeyword {
    Auto,
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaConfig {
    Keyword(AlphaKeyword),
    Value(f64),
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig::Keyword(AlphaKeyword::Auto)
    }
}

impl AlphaConfig {
    pub fn policy(self) -> AlphaPolicy {
        match self {
            AlphaConfig::Keyword(AlphaKeyword::Auto) => AlphaPolicy::Auto,
            AlphaConfig::Value(v) => AlphaPolicy::Fixed(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Triweight,
    Lookahead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub name: KernelName,
    pub h: f64,
    #[serde(default)]
    pub discretization: Discretization,
}

impl KernelConfig {
    pub fn build(&self) -> Box<dyn Kernel> {
        match self.name {
            KernelName::Triweight => Box::new(Triweight { h: self.h }),
            KernelName::Lookahead => Box::new(LookAhead { h: self.h }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub rho: [f64; 2],
    #[serde(rename = "R")]
    pub r: [f64; 2],
    /// Defaults to `[0, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<[f64; 2]>,
    /// Defaults to `[a, b]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(rename = "box")]
    pub validity_box: BoxConfig,
}

const FLUX_NAMES: [&str; 3] = ["nonlocal-lwr", "linear-advection", "zero"];

fn param(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: f64,
    errors: &mut Vec<FieldError>,
) -> f64 {
    match params.get(key) {
        None => default,
        Some(v) => match v.as_f64() {
            Some(x) => x,
            None => {
                errors.push(FieldError::new(format!("flux.params.{key}"), "expected a number"));
                default
            }
        },
    }
}

impl FluxConfig {
    fn model(&self, errors: &mut Vec<FieldError>) -> Option<Arc<dyn FluxModel>> {
        let allowed: &[&str] = match self.name.as_str() {
            "nonlocal-lwr" => &["v_max", "rho_max"],
            "linear-advection" => &["c"],
            "zero" => &[],
            other => {
                errors.push(FieldError::new(
                    "flux.name",
                    format!("unknown flux {other:?}; expected one of {FLUX_NAMES:?}"),
                ));
                return None;
            }
        };
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                errors.push(FieldError::new(format!("flux.params.{key}"), "unknown parameter"));
            }
        }
        let before = errors.len();
        let model: Arc<dyn FluxModel> = match self.name.as_str() {
            "nonlocal-lwr" => {
                let v_max = param(&self.params, "v_max", 1.0, errors);
                let rho_max = param(&self.params, "rho_max", 1.0, errors);
                for (key, v) in [("v_max", v_max), ("rho_max", rho_max)] {
                    if !(v > 0.0 && v.is_finite()) {
                        errors.push(FieldError::new(format!("flux.params.{key}"), "must be positive"));
                    }
                }
                Arc::new(NonlocalLwr { v_max, rho_max })
            }
            "linear-advection" => {
                let c = param(&self.params, "c", 1.0, errors);
                if !c.is_finite() {
                    errors.push(FieldError::new("flux.params.c", "must be finite"));
                }
                Arc::new(LinearAdvection { c })
            }
            _ => Arc::new(ZeroFlux),
        };
        (errors.len() == before).then_some(model)
    }
}

/// Shape of a datum, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatumShape {
    Constant {
        value: f64,
    },
    Step {
        left: f64,
        right: f64,
        at: f64,
    },
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Two columns (coordinate, value) with a header row; relative paths are
    /// resolved against the config file's directory.
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumConfig {
    #[serde(flatten)]
    pub shape: DatumShape,
    /// Declared sup-norm; estimated by sampling when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup: Option<f64>,
    /// Declared total variation; estimated by sampling when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv: Option<f64>,
}

impl DatumConfig {
    fn build(&self, base: &Path, field: &str, errors: &mut Vec<FieldError>) -> Option<Datum> {
        let finite = |name: &str, v: f64, errors: &mut Vec<FieldError>| {
            if !v.is_finite() {
                errors.push(FieldError::new(format!("{field}.{name}"), "must be finite"));
            }
        };
        let before = errors.len();
        let datum = match &self.shape {
            DatumShape::Constant { value } => {
                finite("value", *value, errors);
                Datum::Constant(*value)
            }
            DatumShape::Step { left, right, at } => {
                finite("left", *left, errors);
                finite("right", *right, errors);
                finite("at", *at, errors);
                Datum::Step {
                    left: *left,
                    right: *right,
                    at: *at,
                }
            }
            DatumShape::Sine {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => {
                finite("offset", *offset, errors);
                finite("amplitude", *amplitude, errors);
                finite("wavenumber", *wavenumber, errors);
                finite("phase", *phase, errors);
                Datum::Sine {
                    offset: *offset,
                    amplitude: *amplitude,
                    wavenumber: *wavenumber,
                    phase: *phase,
                }
            }
            DatumShape::Csv { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                match Table::from_csv(&full) {
                    Ok(t) => Datum::Table(t),
                    Err(e) => {
                        errors.push(FieldError::new(format!("{field}.path"), e.to_string()));
                        return None;
                    }
                }
            }
        };
        for (name, v) in [("sup", self.sup), ("tv", self.tv)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    errors.push(FieldError::new(format!("{field}.{name}"), "must be a nonnegative number"));
                }
            }
        }
        if self.sup.is_some() != self.tv.is_some() {
            errors.push(FieldError::new(field, "declare both sup and tv, or neither"));
        }
        (errors.len() == before).then_some(datum)
    }

    fn declared(&self) -> Option<(f64, f64)> {
        self.sup.zip(self.tv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub initial: DatumConfig,
    pub left: DatumConfig,
    pub right: DatumConfig,
}

/// Overwrites one cell after a step; used to exercise the bound checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub step: usize,
    pub cell: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default = "one")]
    pub cfl_safety: f64,
    pub kernel: KernelConfig,
    pub flux: FluxConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub mode: BoundMode,
    /// Store every `stride`-th state in `solution.csv`.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Uniform points in the entropy `k` grid.
    #[serde(default = "default_k_grid")]
    pub k_grid: usize,
    /// Entropy check period; 0 disables, absent means automatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<FaultConfig>,
    /// Directory of the config file; relative data paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_stride() -> usize {
    1
}

fn default_k_grid() -> usize {
    DEFAULT_K_UNIFORM
}

/// Everything a validated config resolves to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: Arc<dyn FluxModel>,
    pub validity_box: ValidityBox,
    pub data: ProblemData,
}

impl RunConfig {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ConfigSyntax(e.to_string()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::ConfigSemantic(vec![FieldError::new(path, e.into_inner().to_string())])
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn validity_box(&self) -> ValidityBox {
        let b = &self.flux.validity_box;
        ValidityBox {
            t: b.t.map_or((0.0, self.t), |v| (v[0], v[1])),
            x: b.x.map_or((self.domain.a, self.domain.b), |v| (v[0], v[1])),
            rho: (b.rho[0], b.rho[1]),
            r: (b.r[0], b.r[1]),
        }
    }

    /// Validates every field and cross-reference, collecting all errors.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut errors = Vec::new();
        let (a, b) = (self.domain.a, self.domain.b);
        if !(a.is_finite() && b.is_finite() && a < b) {
            errors.push(FieldError::new("domain", format!("need finite a < b, got [{a}, {b}]")));
        }
        if self.n == 0 {
            errors.push(FieldError::new("N", "at least one cell is required"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            errors.push(FieldError::new("T", "must be positive and finite"));
        }
        if let AlphaConfig::Value(v) = self.alpha {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(FieldError::new("alpha", "must be \"auto\" or a positive number"));
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errors.push(FieldError::new("cfl_safety", "must lie in (0, 1]"));
        }
        if !self.kernel.h.is_finite() {
            errors.push(FieldError::new("kernel.h", "must be finite"));
        }
        if self.stride == 0 {
            errors.push(FieldError::new("stride", "must be at least 1"));
        }
        if self.k_grid == 0 {
            errors.push(FieldError::new("k_grid", "must be at least 1"));
        }
        let bx = self.validity_box();
        for (name, (lo, hi)) in [("rho", bx.rho), ("R", bx.r), ("t", bx.t), ("x", bx.x)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                errors.push(FieldError::new(format!("flux.box.{name}"), format!("empty range [{lo}, {hi}]")));
            }
        }
        let model = self.flux.model(&mut errors);
        let initial = self.data.initial.build(&self.base_dir, "data.initial", &mut errors);
        let left = self.data.left.build(&self.base_dir, "data.left", &mut errors);
        let right = self.data.right.build(&self.base_dir, "data.right", &mut errors);
        if let (Some(initial), Some(left), Some(right)) = (&initial, &left, &right) {
            if errors.is_empty() {
                self.cross_check(&bx, [initial, left, right], &mut errors);
            }
        }
        if let Some(f) = &self.inject_fault {
            if f.cell == 0 || f.cell > self.n {
                errors.push(FieldError::new("inject_fault.cell", format!("must lie in 1..={}", self.n)));
            }
        }
        if !errors.is_empty() {
            return Err(Error::ConfigSemantic(errors));
        }
        let mut data = ProblemData::new(initial.unwrap(), left.unwrap(), right.unwrap());
        data.declared = [
            self.data.initial.declared(),
            self.data.left.declared(),
            self.data.right.declared(),
        ];
        Ok(Resolved {
            model: model.unwrap(),
            validity_box: bx,
            data,
        })
    }

    /// The box must contain `[0, sup]` of every datum in both `rho` and `R`
    /// (`R` is a nonnegative average of cell values).
    fn cross_check(&self, bx: &ValidityBox, data: [&Datum; 3], errors: &mut Vec<FieldError>) {
        let spans = [
            ("data.initial", data[0], self.domain.a, self.domain.b, &self.data.initial),
            ("data.left", data[1], 0.0, self.t, &self.data.left),
            ("data.right", data[2], 0.0, self.t, &self.data.right),
        ];
        let mut sup = 0.0_f64;
        for (field, datum, lo, hi, cfg) in spans {
            let s = match cfg.sup {
                Some(s) => s,
                None => datum.sup_tv(lo, hi, SUP_SAMPLES).0,
            };
            if s > bx.rho.1 || bx.rho.0 > 0.0 {
                errors.push(FieldError::new(
                    format!("flux.box.rho ({field})"),
                    format!(
                        "box rho range [{}, {}] does not cover the range [0, {s}] of {field}",
                        bx.rho.0, bx.rho.1
                    ),
                ));
            }
            sup = sup.max(s);
        }
        if sup > bx.r.1 || bx.r.0 > 0.0 {
            errors.push(FieldError::new(
                "flux.box.R",
                format!("box R range [{}, {}] does not cover the data range [0, {sup}]", bx.r.0, bx.r.1),
            ));
        }
        let (t_lo, t_hi) = bx.t;
        if t_lo > 0.0 || t_hi < self.t {
            errors.push(FieldError::new("flux.box.t", format!("must contain [0, {}]", self.t)));
        }
        let (x_lo, x_hi) = bx.x;
        if x_lo > self.domain.a || x_hi < self.domain.b {
            errors.push(FieldError::new("flux.box.x", "must contain the domain"));
        }
    }

    /// Flux constants on the validity box: closed form when the model has
    /// one, sampled otherwise.
    pub fn flux_bounds(&self, resolved: &Resolved) -> Result<FluxBounds> {
        match resolved.model.analytic_bounds(&resolved.validity_box) {
            Some(fb) => Ok(fb),
            None => flux_bounds(resolved.model.as_ref(), &resolved.validity_box, FLUX_BOUND_SAMPLES),
        }
    }

    /// Problem on the CFL-driven mesh with `N` cells.
    pub fn problem(&self) -> Result<Problem> {
        self.problem_with(self.n, None)
    }

    /// Problem with `n_cells` cells, optionally with a fixed step count.
    pub fn problem_with(&self, n_cells: usize, n_steps: Option<usize>) -> Result<Problem> {
        let resolved = self.resolve()?;
        let fb = self.flux_bounds(&resolved)?;
        self.problem_from(&resolved, &resolved.data, &fb, n_cells, n_steps)
    }

    pub fn problem_from(
        &self,
        resolved: &Resolved,
        data: &ProblemData,
        fb: &FluxBounds,
        n_cells: usize,
        n_steps: Option<usize>,
    ) -> Result<Problem> {
        let (a, b) = (self.domain.a, self.domain.b);
        let mesh = match n_steps {
            None => Mesh::build(a, b, n_cells, self.t, self.alpha.policy(), fb, self.cfl_safety)?,
            Some(steps) => {
                let alpha = self.alpha.policy().resolve(fb);
                Mesh::with_steps(a, b, n_cells, self.t, steps, alpha, fb)?
            }
        };
        if mesh.alpha < 1.0 {
            warn!("alpha = {} is below 1", mesh.alpha);
        }
        let kernel = self.kernel.build();
        let problem = Problem::assemble(
            mesh,
            kernel.as_ref(),
            self.kernel.discretization,
            resolved.model.clone(),
            fb.clone(),
            data,
        )?;
        let j = problem.kernel_norms.sup_over_k() * problem.data_norms.l1_initial.max(0.0);
        let bx = &fb.validity_box;
        if j > bx.r.1 {
            warn!(
                "the a-priori range of R reaches {j:.3e}, beyond the box R range [{}, {}]",
                bx.r.0, bx.r.1
            );
        }
        Ok(problem)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            mode: self.mode,
            stride: self.stride,
            entropy: match self.entropy_every {
                None => EntropySchedule::Auto,
                Some(0) => EntropySchedule::Never,
                Some(p) => EntropySchedule::Every(p),
            },
            k_uniform: self.k_grid,
            fault: self.inject_fault.map(|f| Fault {
                step: f.step,
                cell: f.cell,
                value: f.value,
            }),
            check_bounds: true,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigSyntax(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::from_json_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "domain": {"a": 0.0, "b": 1.0},
        "N": 50,
        "T": 0.5,
        "kernel": {"name": "triweight", "h": 0.2},
        "flux": {"name": "nonlocal-lwr", "params": {"v_max": 1.0, "rho_max": 1.0},
                 "box": {"rho": [0.0, 1.0], "R": [0.0, 1.0]}},
        "data": {
            "initial": {"kind": "step", "left": 0.8, "right": 0.0, "at": 0.5},
            "left": {"kind": "constant", "value": 0.8},
            "right": {"kind": "constant", "value": 0.0}
        }
    }"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_json_str(text, Path::new("."))
    }

    fn fields(e: Error) -> Vec<String> {
        match e {
            Error::ConfigSemantic(list) => list.into_iter().map(|f| f.field).collect(),
            other => panic!("expected a semantic error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.alpha, AlphaConfig::Keyword(AlphaKeyword::Auto));
        assert_eq!(cfg.mode, BoundMode::Monitor);
        assert_eq!(cfg.stride, 1);
        assert_eq!(cfg.kernel.discretization, Discretization::Midpoint);
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = parse(MINIMAL).unwrap();
        let again = parse(&cfg.to_json_string()).unwrap();
        assert_eq!(cfg, again);
        let mut fixed = cfg.clone();
        fixed.alpha = AlphaConfig::Value(2.5);
        fixed.mode = BoundMode::Strict;
        assert_eq!(parse(&fixed.to_json_string()).unwrap(), fixed);
    }

    #[test]
    fn zero_cells_is_reported_at_n() {
        let text = MINIMAL.replace("\"N\": 50", "\"N\": 0");
        assert_eq!(fields(parse(&text).unwrap_err()), vec!["N"]);
    }

    #[test]
    fn all_errors_are_collected() {
        let text = MINIMAL
            .replace("\"N\": 50", "\"N\": 0")
            .replace("\"T\": 0.5", "\"T\": -1.0")
            .replace("\"rho_max\": 1.0", "\"rho_max\": -1.0");
        let f = fields(parse(&text).unwrap_err());
        assert!(f.contains(&"N".to_string()));
        assert!(f.contains(&"T".to_string()));
        assert!(f.contains(&"flux.params.rho_max".to_string()));
    }

    #[test]
    fn box_must_cover_the_data() {
        let text = MINIMAL.replace("\"left\": 0.8, \"right\": 0.0, \"at\"", "\"left\": 2.0, \"right\": 0.0, \"at\"");
        let f = fields(parse(&text).unwrap_err());
        assert!(f.iter().any(|s| s.starts_with("flux.box.rho")), "{f:?}");
    }

    #[test]
    fn syntax_errors_are_distinct() {
        assert!(matches!(parse("{ not json"), Err(Error::ConfigSyntax(_))));
    }

    #[test]
    fn type_errors_carry_the_path() {
        let text = MINIMAL.replace("\"h\": 0.2", "\"h\": \"wide\"");
        assert_eq!(fields(parse(&text).unwrap_err()), vec!["kernel.h"]);
    }

    #[test]
    fn unknown_flux_is_rejected() {
        let text = MINIMAL.replace("nonlocal-lwr", "burgers");
        assert!(fields(parse(&text).unwrap_err()).contains(&"flux.name".to_string()));
    }

    #[test]
    fn csv_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rho0.csv"), "x,rho\n0,0.1\n1,0.3\n").unwrap();
        let text = MINIMAL.replace(
            r#""initial": {"kind": "step", "left": 0.8, "right": 0.0, "at": 0.5}"#,
            r#""initial": {"kind": "csv", "path": "rho0.csv"}"#,
        );
        let path = dir.path().join("run.json");
        std::fs::write(&path, text).unwrap();
        let cfg = parse_config(&path).unwrap();
        let p = cfg.problem().unwrap();
        assert!((p.projected.rho0[0] - 0.1).abs() < 0.01);
    }

    #[test]
    fn problem_assembles() {
        let p = parse(MINIMAL).unwrap().problem().unwrap();
        assert_eq!(p.mesh.n_cells, 50);
        assert_eq!(p.mesh.alpha, 1.0);
        assert!((p.mesh.lambda - 1.0 / 6.0).abs() < 1e-2);
    }
}
