//! Mesh geometry, time-step selection under the positivity CFL condition, and
//! projection of the initial and boundary data onto cell and slab averages.

use std::fmt;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::flux::FluxBounds;
use crate::quadrature::GaussLegendre;

/// Relative slack allowed when auditing `lambda` against the CFL maximum.
const CFL_SLACK: f64 = 1e-12;

/// Uniform mesh on `[a, b]` with `n_cells` cells and `n_steps` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

/// Viscosity coefficient policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// `max(L, 1)`.
    Auto,
    /// A fixed value, raised to `L` when smaller.
    Fixed(f64),
}

impl AlphaPolicy {
    pub fn resolve(self, bounds: &FluxBounds) -> f64 {
        match self {
            AlphaPolicy::Auto => bounds.l.max(1.0),
            AlphaPolicy::Fixed(alpha) => {
                if alpha < bounds.l {
                    warn!("alpha = {alpha} is below L = {}; raised to L", bounds.l);
                    bounds.l
                } else {
                    alpha
                }
            }
        }
    }
}

/// Largest admissible `lambda = dt/dx` for the given viscosity and flux constants.
pub fn cfl_lambda_max(alpha: f64, bounds: &FluxBounds, dx: f64) -> f64 {
    (1.0 / 3.0) * (1.0 / alpha).min(1.0 / (2.0 * bounds.l + bounds.c * dx))
}

fn check_geometry(a: f64, b: f64, n_cells: usize, t_final: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::InvalidDomain { a, b });
    }
    if n_cells < 1 {
        return Err(Error::InvalidCellCount(n_cells));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    Ok(())
}

impl Mesh {
    /// CFL-driven construction: picks the largest admissible step scaled by
    /// `safety`, then shrinks it so that a whole number of steps reaches `t_final`.
    pub fn build(
        a: f64,
        b: f64,
        n_cells: usize,
        t_final: f64,
        alpha: AlphaPolicy,
        bounds: &FluxBounds,
        safety: f64,
    ) -> Result<Mesh> {
        check_geometry(a, b, n_cells, t_final)?;
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::InvalidMesh(format!(
                "CFL safety factor must lie in (0, 1], got {safety}"
            )));
        }
        let alpha = alpha.resolve(bounds);
        let dx = (b - a) / n_cells as f64;
        let dt_max = safety * dx * cfl_lambda_max(alpha, bounds, dx);
        let n_steps = (t_final / dt_max).ceil().max(1.0) as usize;
        Self::with_steps(a, b, n_cells, t_final, n_steps, alpha, bounds)
    }

    /// Fixed step count; used to hold `lambda` constant under refinement.
    pub fn with_steps(
        a: f64,
        b: f64,
        n_cells: usize,
        t_final: f64,
        n_steps: usize,
        alpha: f64,
        bounds: &FluxBounds,
    ) -> Result<Mesh> {
        check_geometry(a, b, n_cells, t_final)?;
        if n_steps < 1 {
            return Err(Error::InvalidMesh("at least one time step is required".into()));
        }
        let alpha = alpha.max(bounds.l);
        let dx = (b - a) / n_cells as f64;
        let dt = t_final / n_steps as f64;
        let mesh = Mesh {
            a,
            b,
            n_cells,
            dx,
            dt,
            lambda: dt / dx,
            alpha,
            t_final,
            n_steps,
        };
        mesh.check_cfl(bounds)?;
        Ok(mesh)
    }

    pub fn lambda_max(&self, bounds: &FluxBounds) -> f64 {
        cfl_lambda_max(self.alpha, bounds, self.dx)
    }

    pub fn check_cfl(&self, bounds: &FluxBounds) -> Result<()> {
        let max = self.lambda_max(bounds);
        if self.alpha < bounds.l || self.lambda > max * (1.0 + CFL_SLACK) {
            return Err(Error::CflViolation {
                lambda: self.lambda,
                max,
            });
        }
        Ok(())
    }

    /// `x_{j+1/2} = a + j dx`, `j = 0..=N`.
    pub fn interface(&self, j: usize) -> f64 {
        self.a + j as f64 * self.dx
    }

    /// `x_j = a + (j - 1/2) dx`, `j = 1..=N`.
    pub fn center(&self, j: usize) -> f64 {
        self.a + (j as f64 - 0.5) * self.dx
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn centers(&self) -> Vec<f64> {
        (1..=self.n_cells).map(|j| self.center(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// Piecewise-linear table, constant beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Table> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(
                "table needs matching, non-empty coordinate and value columns".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "table coordinates must be strictly increasing".into(),
            ));
        }
        Ok(Table { xs, ys })
    }

    /// Reads a two-column CSV with a header row.
    pub fn from_csv(path: &std::path::Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            if row.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    i + 1,
                    row.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("{}: row {}: {e}", path.display(), i + 1))
                })
            };
            xs.push(parse(&row[0])?);
            ys.push(parse(&row[1])?);
        }
        Table::new(xs, ys)
    }

    pub fn value(&self, s: f64) -> f64 {
        let n = self.xs.len();
        if s <= self.xs[0] {
            return self.ys[0];
        }
        if s >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&x| x <= s) - 1;
        let w = (s - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        // Break points inside (lo, hi) split the integrand into linear pieces.
        let mut knots = vec![lo];
        knots.extend(self.xs.iter().copied().filter(|&x| x > lo && x < hi));
        knots.push(hi);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
            .sum()
    }

    fn sup_tv(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut knots = vec![lo];
        knots.extend(self.xs.iter().copied().filter(|&x| x > lo && x < hi));
        knots.push(hi);
        let vals: Vec<f64> = knots.iter().map(|&s| self.value(s)).collect();
        let sup = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tv = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        (sup, tv)
    }
}

/// A scalar datum: initial profile in `x` or boundary profile in `t`.
#[derive(Clone)]
pub enum Datum {
    Constant(f64),
    /// `left` for `s < at`, `right` for `s >= at`.
    Step { left: f64, right: f64, at: f64 },
    /// `offset + amplitude * sin(wavenumber * s + phase)`.
    Sine {
        offset: f64,
        amplitude: f64,
        wavenumber: f64,
        phase: f64,
    },
    Table(Table),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Constant(c) => write!(f, "Constant({c})"),
            Datum::Step { left, right, at } => write!(f, "Step({left} | {right} at {at})"),
            Datum::Sine {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => write!(f, "Sine({offset} + {amplitude} sin({wavenumber} s + {phase}))"),
            Datum::Table(t) => write!(f, "Table({} points)", t.xs.len()),
            Datum::Function(_) => write!(f, "Function"),
        }
    }
}

impl Datum {
    pub fn function<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Datum {
        Datum::Function(Arc::new(f))
    }

    /// Adds a constant to the datum.
    pub fn shifted(&self, eps: f64) -> Datum {
        match self {
            Datum::Constant(c) => Datum::Constant(c + eps),
            Datum::Step { left, right, at } => Datum::Step {
                left: left + eps,
                right: right + eps,
                at: *at,
            },
            Datum::Sine {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => Datum::Sine {
                offset: offset + eps,
                amplitude: *amplitude,
                wavenumber: *wavenumber,
                phase: *phase,
            },
            other => {
                let inner = other.clone();
                Datum::function(move |s| inner.value(s) + eps)
            }
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Datum::Constant(c) => *c,
            Datum::Step { left, right, at } => {
                if s < *at {
                    *left
                } else {
                    *right
                }
            }
            Datum::Sine {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => offset + amplitude * (wavenumber * s + phase).sin(),
            Datum::Table(t) => t.value(s),
            Datum::Function(f) => f(s),
        }
    }

    /// `∫_lo^hi datum`; closed form where available, otherwise composite
    /// Gauss-Legendre with `panels` panels (nodes never touch the end points).
    pub fn integral(&self, lo: f64, hi: f64, panels: usize, gl: &GaussLegendre) -> f64 {
        match self {
            Datum::Constant(c) => c * (hi - lo),
            Datum::Step { left, right, at } => {
                let cut = at.clamp(lo, hi);
                left * (cut - lo) + right * (hi - cut)
            }
            Datum::Sine {
                offset,
                amplitude,
                wavenumber,
                phase,
            } => {
                let k = *wavenumber;
                if k == 0.0 {
                    (offset + amplitude * phase.sin()) * (hi - lo)
                } else {
                    offset * (hi - lo)
                        - amplitude / k * ((k * hi + phase).cos() - (k * lo + phase).cos())
                }
            }
            Datum::Table(t) => t.integral(lo, hi),
            Datum::Function(f) => gl.integrate(|s| f(s), lo, hi, panels),
        }
    }

    /// `(sup |datum|, TV(datum))` on `[lo, hi]`; exact for constants, steps and
    /// tables, sampled on `samples` points otherwise.
    pub fn sup_tv(&self, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
        match self {
            Datum::Constant(c) => (c.abs(), 0.0),
            Datum::Step { left, right, at } => {
                if *at > lo && *at <= hi {
                    (left.abs().max(right.abs()), (right - left).abs())
                } else if *at <= lo {
                    (right.abs(), 0.0)
                } else {
                    (left.abs(), 0.0)
                }
            }
            Datum::Table(t) => t.sup_tv(lo, hi),
            _ => {
                let n = samples.max(2);
                let h = (hi - lo) / n as f64;
                let vals: Vec<f64> = (0..=n).map(|i| self.value(lo + i as f64 * h)).collect();
                let sup = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let tv = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
                (sup, tv)
            }
        }
    }

    /// Smallest sampled value on `[lo, hi]` together with its location.
    pub fn sampled_min(&self, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
        match self {
            Datum::Constant(c) => (*c, lo),
            Datum::Step { left, right, at } => {
                if *at <= lo {
                    (*right, lo)
                } else if *at > hi || left <= right {
                    (*left, lo)
                } else {
                    (*right, *at)
                }
            }
            _ => {
                let n = samples.max(2);
                let h = (hi - lo) / n as f64;
                (0..=n)
                    .map(|i| {
                        let s = lo + i as f64 * h;
                        (self.value(s), s)
                    })
                    .fold((f64::INFINITY, lo), |m, v| if v.0 < m.0 { v } else { m })
            }
        }
    }
}

/// Sup-norm and total variation attached to a datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatumSummary {
    pub sup: f64,
    pub tv: f64,
    /// `true` when the values were sampled rather than declared or exact.
    pub estimated: bool,
}

/// Continuous problem data: `rho_o` on `]a, b[`, `rho_a`, `rho_b` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub initial: Datum,
    pub left: Datum,
    pub right: Datum,
    /// Caller-declared `(sup, tv)` per datum, in the order initial/left/right.
    pub declared: [Option<(f64, f64)>; 3],
}

impl ProblemData {
    pub fn new(initial: Datum, left: Datum, right: Datum) -> Self {
        Self {
            initial,
            left,
            right,
            declared: [None; 3],
        }
    }

    /// Summaries on the mesh; undeclared values are estimated on a 16x
    /// oversampled grid.
    pub fn summaries(&self, mesh: &Mesh) -> [DatumSummary; 3] {
        let spans = [
            (&self.initial, mesh.a, mesh.b, 16 * mesh.n_cells),
            (&self.left, 0.0, mesh.t_final, 16 * mesh.n_steps),
            (&self.right, 0.0, mesh.t_final, 16 * mesh.n_steps),
        ];
        let mut out = [DatumSummary {
            sup: 0.0,
            tv: 0.0,
            estimated: false,
        }; 3];
        for (i, (datum, lo, hi, samples)) in spans.into_iter().enumerate() {
            out[i] = match self.declared[i] {
                Some((sup, tv)) => DatumSummary {
                    sup,
                    tv,
                    estimated: false,
                },
                None => {
                    let (sup, tv) = datum.sup_tv(lo, hi, samples);
                    let estimated = !matches!(
                        datum,
                        Datum::Constant(_) | Datum::Step { .. } | Datum::Table(_)
                    );
                    if estimated {
                        warn!(
                            "sup/TV of datum {} estimated by sampling; a-priori constants are estimates",
                            ["initial", "left", "right"][i]
                        );
                    }
                    DatumSummary { sup, tv, estimated }
                }
            };
        }
        out
    }
}

/// Cell averages of the initial datum and slab averages of the boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedData {
    /// `rho_j^0`, `j = 1..=N` (stored at index `j - 1`).
    pub rho0: Vec<f64>,
    /// `rho_a^n`, `n = 0..=N_T`.
    pub left: Vec<f64>,
    /// `rho_b^n`, `n = 0..=N_T`.
    pub right: Vec<f64>,
}

const PROJECTION_RULE_POINTS: usize = 5;

fn check_nonnegative(
    datum: &Datum,
    which: &'static str,
    lo: f64,
    hi: f64,
    samples: usize,
) -> Result<()> {
    let (min, at) = datum.sampled_min(lo, hi, samples);
    if min < 0.0 || min.is_nan() {
        return Err(Error::NegativeDatum {
            which,
            at,
            value: min,
        });
    }
    Ok(())
}

/// `rho_j^0 = (1/dx) ∫_{x_{j-1/2}}^{x_{j+1/2}} rho_o`.
pub fn project_initial(data: &ProblemData, mesh: &Mesh, panels: usize) -> Result<Vec<f64>> {
    if panels < 4 {
        return Err(Error::InvalidArgument(format!(
            "projection needs at least 4 panels per cell, got {panels}"
        )));
    }
    check_nonnegative(&data.initial, "initial datum", mesh.a, mesh.b, 16 * mesh.n_cells)?;
    let gl = GaussLegendre::new(PROJECTION_RULE_POINTS);
    Ok((1..=mesh.n_cells)
        .map(|j| {
            let lo = mesh.interface(j - 1);
            let hi = mesh.interface(j);
            data.initial.integral(lo, hi, panels, &gl) / mesh.dx
        })
        .collect())
}

/// `rho_a^n = (1/dt) ∫_{t^n}^{t^{n+1}} rho_a`, likewise `rho_b^n`, for
/// `n = 0..=N_T`. The last slab lies past `T` and feeds the final ghost values.
pub fn project_boundary(
    data: &ProblemData,
    mesh: &Mesh,
    panels: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if panels < 4 {
        return Err(Error::InvalidArgument(format!(
            "projection needs at least 4 panels per slab, got {panels}"
        )));
    }
    let horizon = mesh.time(mesh.n_steps + 1);
    let samples = 16 * (mesh.n_steps + 1);
    check_nonnegative(&data.left, "left boundary datum", 0.0, horizon, samples)?;
    check_nonnegative(&data.right, "right boundary datum", 0.0, horizon, samples)?;
    let gl = GaussLegendre::new(PROJECTION_RULE_POINTS);
    let slab = |datum: &Datum| -> Vec<f64> {
        (0..=mesh.n_steps)
            .map(|n| datum.integral(mesh.time(n), mesh.time(n + 1), panels, &gl) / mesh.dt)
            .collect()
    };
    Ok((slab(&data.left), slab(&data.right)))
}

pub fn project(data: &ProblemData, mesh: &Mesh, panels: usize) -> Result<ProjectedData> {
    let rho0 = project_initial(data, mesh, panels)?;
    let (left, right) = project_boundary(data, mesh, panels)?;
    Ok(ProjectedData { rho0, left, right })
}
