//! The boundary-aware Lax-Friedrichs scheme and its time loop.

use std::sync::Arc;

use log::{debug, warn};
use rayon::prelude::*;

use crate::bounds::{apriori_constants, ConstantsReport, DataNorms};
use crate::diagnostics::{
    compare_bounds, default_k_grid, entropy_residuals, measure, time_diff, BoundMode,
    DiagnosticsRecord, Violation, DEFAULT_K_UNIFORM,
};
use crate::error::{Error, Result};
use crate::flux::{evaluate_flux, FluxBounds, FluxModel};
use crate::grid::{project, Mesh, ProblemData, ProjectedData};
use crate::kernel::{
    build_discrete_kernel, kernel_norms, nonlocal_average, DiscreteKernel, Discretization, Kernel,
    KernelNorms,
};

/// Interface counts from which fluxes are evaluated in parallel.
const PARALLEL_INTERFACES: usize = 1024;

/// Panels per cell or slab for data projection.
pub const PROJECTION_PANELS: usize = 8;

/// Quadrature points for kernel norms.
pub const NORM_QUADRATURE_POINTS: usize = 1024;

/// `½[f(t,x,u,R) + f(t,x,v,R) - α(v - u)]`.
pub fn numerical_flux(
    model: &dyn FluxModel,
    t: f64,
    x: f64,
    u: f64,
    v: f64,
    r: f64,
    alpha: f64,
) -> Result<f64> {
    let fu = evaluate_flux(model, t, x, u, r)?;
    let fv = evaluate_flux(model, t, x, v, r)?;
    Ok(0.5 * (fu + fv - alpha * (v - u)))
}

/// Cell values at one time level, ghosts, and the interface averages of the cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub step: usize,
    pub t: f64,
    /// `ρ_j`, `j = 1..=N`, stored at `j - 1`.
    pub cells: Vec<f64>,
    pub ghost_left: f64,
    pub ghost_right: f64,
    /// `R_{j+1/2}`, `j = 0..=N`.
    pub interface_r: Vec<f64>,
}

impl SolverState {
    pub fn new(
        step: usize,
        t: f64,
        cells: Vec<f64>,
        ghost_left: f64,
        ghost_right: f64,
        dk: &DiscreteKernel,
    ) -> Result<SolverState> {
        if let Some(cell) = cells.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step, cell: cell + 1 });
        }
        if !ghost_left.is_finite() {
            return Err(Error::NonFiniteState { step, cell: 0 });
        }
        if !ghost_right.is_finite() {
            return Err(Error::NonFiniteState {
                step,
                cell: cells.len() + 1,
            });
        }
        let interface_r = nonlocal_average(dk, &cells)?;
        Ok(SolverState {
            step,
            t,
            cells,
            ghost_left,
            ghost_right,
            interface_r,
        })
    }

    /// `ρ_j` for `j = 0..=N+1`, ghosts included.
    pub fn value(&self, j: usize) -> f64 {
        let n = self.cells.len();
        if j == 0 {
            self.ghost_left
        } else if j == n + 1 {
            self.ghost_right
        } else {
            self.cells[j - 1]
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Replaces one cell value and refreshes the interface averages.
    pub fn overwrite_cell(&mut self, cell: usize, value: f64, dk: &DiscreteKernel) -> Result<()> {
        if cell == 0 || cell > self.cells.len() {
            return Err(Error::InvalidArgument(format!(
                "cell index {cell} outside 1..={}",
                self.cells.len()
            )));
        }
        self.cells[cell - 1] = value;
        self.interface_r = nonlocal_average(dk, &self.cells)?;
        Ok(())
    }
}

/// A step's new state and its two boundary fluxes `F_{1/2}`, `F_{N+1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: SolverState,
    pub flux_left: f64,
    pub flux_right: f64,
}

/// Everything one step needs.
#[derive(Clone, Copy)]
pub struct Scheme<'a> {
    pub mesh: &'a Mesh,
    pub dk: &'a DiscreteKernel,
    pub model: &'a dyn FluxModel,
    pub traces: &'a ProjectedData,
}

impl Scheme<'_> {
    pub fn initial_state(&self) -> Result<SolverState> {
        self.check_traces(0)?;
        SolverState::new(
            0,
            0.0,
            self.traces.rho0.clone(),
            self.traces.left[0],
            self.traces.right[0],
            self.dk,
        )
    }

    fn check_traces(&self, n: usize) -> Result<()> {
        let have = self.traces.left.len().min(self.traces.right.len());
        if n >= have {
            return Err(Error::InvalidArgument(format!(
                "boundary traces cover {have} slabs, step {n} requested"
            )));
        }
        Ok(())
    }

    /// `F_{j+1/2}^n(ρ_j, ρ_{j+1})` for `j = 0..=N`.
    pub fn interface_fluxes(&self, state: &SolverState) -> Result<Vec<f64>> {
        let n = state.n_cells();
        let mesh = self.mesh;
        let at = |j: usize| {
            numerical_flux(
                self.model,
                state.t,
                mesh.interface(j),
                state.value(j),
                state.value(j + 1),
                state.interface_r[j],
                mesh.alpha,
            )
        };
        if n + 1 >= PARALLEL_INTERFACES {
            (0..=n).into_par_iter().map(at).collect()
        } else {
            (0..=n).map(at).collect()
        }
    }

    pub fn advance(&self, state: &SolverState) -> Result<StepOutput> {
        let next = state.step + 1;
        self.check_traces(next)?;
        if state.n_cells() != self.mesh.n_cells {
            return Err(Error::LengthMismatch {
                expected: self.mesh.n_cells,
                got: state.n_cells(),
            });
        }
        let flux = self.interface_fluxes(state)?;
        let lambda = self.mesh.lambda;
        let cells: Vec<f64> = state
            .cells
            .iter()
            .enumerate()
            .map(|(i, rho)| rho - lambda * (flux[i + 1] - flux[i]))
            .collect();
        let new_state = SolverState::new(
            next,
            self.mesh.time(next),
            cells,
            self.traces.left[next],
            self.traces.right[next],
            self.dk,
        )?;
        Ok(StepOutput {
            state: new_state,
            flux_left: flux[0],
            flux_right: flux[state.n_cells()],
        })
    }
}

/// One step of the scheme; ghosts of the new state come from `traces`.
pub fn step(
    state: &SolverState,
    dk: &DiscreteKernel,
    model: &dyn FluxModel,
    mesh: &Mesh,
    traces: &ProjectedData,
) -> Result<SolverState> {
    let scheme = Scheme { mesh, dk, model, traces };
    Ok(scheme.advance(state)?.state)
}

/// An assembled discrete problem: mesh, kernel tables, flux, projected data and
/// the norms the bounds need.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub dk: DiscreteKernel,
    pub kernel_norms: KernelNorms,
    pub model: Arc<dyn FluxModel>,
    pub flux_bounds: FluxBounds,
    pub projected: ProjectedData,
    pub data_norms: DataNorms,
}

impl Problem {
    pub fn assemble(
        mesh: Mesh,
        kernel: &dyn Kernel,
        discretization: Discretization,
        model: Arc<dyn FluxModel>,
        flux_bounds: FluxBounds,
        data: &ProblemData,
    ) -> Result<Problem> {
        mesh.check_cfl(&flux_bounds)?;
        let dk = build_discrete_kernel(kernel, &mesh, discretization)?;
        let kernel_norms = kernel_norms(kernel, &mesh, NORM_QUADRATURE_POINTS)?;
        let projected = project(data, &mesh, PROJECTION_PANELS)?;
        Ok(Self::from_parts(mesh, dk, kernel_norms, model, flux_bounds, projected))
    }

    /// Assembly from already projected data.
    pub fn from_parts(
        mesh: Mesh,
        dk: DiscreteKernel,
        kernel_norms: KernelNorms,
        model: Arc<dyn FluxModel>,
        flux_bounds: FluxBounds,
        projected: ProjectedData,
    ) -> Problem {
        let data_norms = DataNorms::from_projected(&mesh, &projected);
        Problem {
            mesh,
            dk,
            kernel_norms,
            model,
            flux_bounds,
            projected,
            data_norms,
        }
    }

    pub fn scheme(&self) -> Scheme<'_> {
        Scheme {
            mesh: &self.mesh,
            dk: &self.dk,
            model: self.model.as_ref(),
            traces: &self.projected,
        }
    }

    pub fn step_times(&self) -> Vec<f64> {
        (0..=self.mesh.n_steps).map(|n| self.mesh.time(n)).collect()
    }

    pub fn constants(&self) -> Result<ConstantsReport> {
        apriori_constants(
            &self.kernel_norms,
            &self.flux_bounds,
            &self.data_norms,
            self.mesh.alpha,
            &self.step_times(),
        )
    }
}

/// Which steps get an entropy check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropySchedule {
    /// Every step for `N <= 512`, every 8th step otherwise.
    #[default]
    Auto,
    Every(usize),
    Never,
}

impl EntropySchedule {
    fn period(self, n_cells: usize) -> Option<usize> {
        match self {
            EntropySchedule::Auto => Some(if n_cells <= 512 { 1 } else { 8 }),
            EntropySchedule::Every(0) | EntropySchedule::Never => None,
            EntropySchedule::Every(p) => Some(p),
        }
    }
}

/// Overwrites one cell right after the given step; exercises the bound checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub step: usize,
    /// `1..=N`.
    pub cell: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub mode: BoundMode,
    /// Store every `stride`-th state (the final state is always stored).
    pub stride: usize,
    pub entropy: EntropySchedule,
    /// Uniform points in the entropy `k` grid.
    pub k_uniform: usize,
    pub fault: Option<Fault>,
    /// Compare against the bound curves at all.
    pub check_bounds: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mode: BoundMode::Monitor,
            stride: 1,
            entropy: EntropySchedule::Auto,
            k_uniform: DEFAULT_K_UNIFORM,
            fault: None,
            check_bounds: true,
        }
    }
}

impl SolveOptions {
    /// No bound checks and no entropy checks.
    pub fn plain() -> Self {
        SolveOptions {
            entropy: EntropySchedule::Never,
            check_bounds: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Stored states, increasing in time; the last one is at `T`.
    pub states: Vec<SolverState>,
    /// One record per step `0..=N_T`.
    pub records: Vec<DiagnosticsRecord>,
    pub constants: Option<ConstantsReport>,
    pub violations: Vec<Violation>,
    /// Steps at which some cell or interface average left the validity box.
    pub out_of_box_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &SolverState {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn min_cell(&self) -> f64 {
        self.records.iter().map(|r| r.min).fold(f64::INFINITY, f64::min)
    }
}

fn leaves_box(state: &SolverState, fb: &FluxBounds) -> bool {
    let bx = &fb.validity_box;
    !state.cells.iter().all(|&v| bx.contains_rho(v))
        || !state.interface_r.iter().all(|&r| bx.contains_r(r))
}

/// Runs `N_T` steps, recording diagnostics and checking bounds per `options`.
/// Errors carry the step at which they occurred.
pub fn solve(problem: &Problem, options: &SolveOptions) -> Result<Trajectory> {
    let scheme = problem.scheme();
    let mesh = &problem.mesh;
    let stride = options.stride.max(1);
    let constants = if options.check_bounds {
        Some(problem.constants()?)
    } else {
        None
    };
    let entropy_period = options.entropy.period(mesh.n_cells);

    let mut state = scheme.initial_state().map_err(|e| e.at_step(0))?;
    let mut states = vec![state.clone()];
    let mut records = Vec::with_capacity(mesh.n_steps + 1);
    let mut violations = Vec::new();
    let mut out_of_box_steps = 0;

    let check = |record: &mut DiagnosticsRecord, violations: &mut Vec<Violation>| -> Result<()> {
        if let Some(c) = &constants {
            let found = compare_bounds(record, c);
            if let Some(v) = found.first() {
                if options.mode == BoundMode::Strict {
                    return Err(v.clone().into_error());
                }
                for v in &found {
                    debug!("{v}");
                }
            }
            violations.extend(found);
        }
        Ok(())
    };

    let mut first = measure(&state, mesh);
    check(&mut first, &mut violations)?;
    records.push(first);
    if leaves_box(&state, &problem.flux_bounds) {
        out_of_box_steps += 1;
    }

    for n in 0..mesh.n_steps {
        let out = scheme.advance(&state).map_err(|e| e.at_step(n + 1))?;
        let mut next = out.state;
        if let Some(f) = options.fault.filter(|f| f.step == n + 1) {
            next.overwrite_cell(f.cell, f.value, &problem.dk)
                .map_err(|e| e.at_step(n + 1))?;
        }
        let mut record = measure(&next, mesh);
        let (td, gj) = time_diff(&state, &next, mesh)?;
        record.time_diff = Some(td);
        record.ghost_jump = Some(gj);
        record.mass_residual =
            Some(record.mass - records[n].mass + mesh.dt * (out.flux_right - out.flux_left));
        if entropy_period.is_some_and(|p| n % p == 0) {
            let ks = default_k_grid(&state, &next, options.k_uniform);
            let res = entropy_residuals(&state, &next, mesh, problem.model.as_ref(), &ks)
                .map_err(|e| e.at_step(n + 1))?;
            record.entropy_plus_max = Some(res.plus_max);
            record.entropy_minus_max = Some(res.minus_max);
        }
        check(&mut record, &mut violations)?;
        records.push(record);
        if leaves_box(&next, &problem.flux_bounds) {
            out_of_box_steps += 1;
        }
        if (n + 1) % stride == 0 || n + 1 == mesh.n_steps {
            states.push(next.clone());
        }
        state = next;
    }
    if out_of_box_steps > 0 {
        warn!(
            "solution left the flux validity box at {out_of_box_steps} of {} time levels; flux constants may not apply there",
            mesh.n_steps + 1
        );
    }
    if !violations.is_empty() {
        warn!("{} bound violations recorded", violations.len());
    }
    Ok(Trajectory {
        states,
        records,
        constants,
        violations,
        out_of_box_steps,
    })
}
