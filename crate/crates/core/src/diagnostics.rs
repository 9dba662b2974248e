//! Discrete norms, the discrete entropy functionals and their residuals, and
//! comparison of measured quantities against the bound curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::ConstantsReport;
use crate::error::{Error, Result};
use crate::flux::{evaluate_flux, FluxModel};
use crate::grid::Mesh;
use crate::solver::{numerical_flux, SolverState};

pub const TOL_L1: f64 = 1e-10;
pub const TOL_LINF: f64 = 1e-10;
pub const TOL_TV: f64 = 1e-8;
pub const TOL_TIME_DIFF: f64 = 1e-8;
pub const TOL_ENTROPY: f64 = 1e-12;
pub const TOL_POSITIVITY: f64 = 1e-12;

/// Number of uniform points added to the entropy `k` grid by default.
pub const DEFAULT_K_UNIFORM: usize = 32;

pub fn pos(s: f64) -> f64 {
    s.max(0.0)
}

pub fn neg(s: f64) -> f64 {
    (-s).max(0.0)
}

pub fn sgn_plus(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sgn_minus(s: f64) -> f64 {
    if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Measured quantities at one step, with margins `bound - measured` once
/// compared against a [`ConstantsReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
    /// Includes the two ghost differences.
    pub tv: f64,
    pub min: f64,
    pub mass: f64,
    /// `Σ_{j=0}^{N+1} dx |ρ_j^n - ρ_j^{n-1}|`; absent at step 0.
    pub time_diff: Option<f64>,
    /// Ghost part of `time_diff`.
    pub ghost_jump: Option<f64>,
    pub entropy_plus_max: Option<f64>,
    pub entropy_minus_max: Option<f64>,
    /// `mass^n - mass^{n-1} + dt (F_{N+1/2} - F_{1/2})`.
    pub mass_residual: Option<f64>,
    pub margin_l1: Option<f64>,
    pub margin_linf: Option<f64>,
    pub margin_tv: Option<f64>,
    pub margin_timediff: Option<f64>,
}

/// Norms, mass and minimum of a state.
pub fn measure(state: &SolverState, mesh: &Mesh) -> DiagnosticsRecord {
    let cells = &state.cells;
    let mut tv = (cells[0] - state.ghost_left).abs() + (state.ghost_right - cells[cells.len() - 1]).abs();
    tv += cells.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
    DiagnosticsRecord {
        step: state.step,
        t: state.t,
        l1: mesh.dx * cells.iter().map(|v| v.abs()).sum::<f64>(),
        linf: cells.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        tv,
        min: cells.iter().copied().fold(f64::INFINITY, f64::min),
        mass: mesh.dx * cells.iter().sum::<f64>(),
        time_diff: None,
        ghost_jump: None,
        entropy_plus_max: None,
        entropy_minus_max: None,
        mass_residual: None,
        margin_l1: None,
        margin_linf: None,
        margin_tv: None,
        margin_timediff: None,
    }
}

fn check_consecutive(prev: &SolverState, next: &SolverState) -> Result<()> {
    if next.step != prev.step + 1 || next.cells.len() != prev.cells.len() {
        return Err(Error::StateMismatch {
            prev: prev.step,
            next: next.step,
        });
    }
    Ok(())
}

/// `(Σ_{j=0}^{N+1} dx |ρ_j^{n+1} - ρ_j^n|, dx (|Δρ_a| + |Δρ_b|))`.
pub fn time_diff(prev: &SolverState, next: &SolverState, mesh: &Mesh) -> Result<(f64, f64)> {
    check_consecutive(prev, next)?;
    let ghosts = mesh.dx
        * ((next.ghost_left - prev.ghost_left).abs() + (next.ghost_right - prev.ghost_right).abs());
    let inner: f64 = prev
        .cells
        .iter()
        .zip(&next.cells)
        .map(|(a, b)| (b - a).abs())
        .sum();
    Ok((ghosts + mesh.dx * inner, ghosts))
}

/// The functionals `H`, `G`, `L` at time level `n` of a state.
pub struct EntropyFunctionals<'a> {
    pub model: &'a dyn FluxModel,
    pub mesh: &'a Mesh,
    pub state: &'a SolverState,
}

impl EntropyFunctionals<'_> {
    /// `F_{i+1/2}^n(u, v)` with the stored `R_{i+1/2}^n`, `i = 0..=N`.
    pub fn flux(&self, i: usize, u: f64, v: f64) -> Result<f64> {
        numerical_flux(
            self.model,
            self.state.t,
            self.mesh.interface(i),
            u,
            v,
            self.state.interface_r[i],
            self.mesh.alpha,
        )
    }

    /// `H_j^n(u, v, z) = v - λ (F_{j+1/2}(v, z) - F_{j-1/2}(u, v))`, `j = 1..=N`.
    pub fn h(&self, j: usize, u: f64, v: f64, z: f64) -> Result<f64> {
        Ok(v - self.mesh.lambda * (self.flux(j, v, z)? - self.flux(j - 1, u, v)?))
    }

    /// `G_{i+1/2}^{n,k}(u, v) = F(u ∨ k, v ∨ k) - F(k, k)`.
    pub fn g(&self, i: usize, k: f64, u: f64, v: f64) -> Result<f64> {
        Ok(self.flux(i, u.max(k), v.max(k))? - self.flux(i, k, k)?)
    }

    /// `L_{i+1/2}^{n,k}(u, v) = F(k, k) - F(u ∧ k, v ∧ k)`.
    pub fn l(&self, i: usize, k: f64, u: f64, v: f64) -> Result<f64> {
        Ok(self.flux(i, k, k)? - self.flux(i, u.min(k), v.min(k))?)
    }
}

/// Worst entropy residuals over `j` and `k`, with per-cell maxima over `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyResiduals {
    pub plus_max: f64,
    pub minus_max: f64,
    pub per_cell_plus: Vec<f64>,
    pub per_cell_minus: Vec<f64>,
}

/// Cell and ghost values of both states plus `uniform` points on
/// `[min - δ, max + δ]`, `δ = 0.05 (max - min)`; sorted, no duplicates.
pub fn default_k_grid(prev: &SolverState, next: &SolverState, uniform: usize) -> Vec<f64> {
    let mut ks: Vec<f64> = Vec::with_capacity(2 * prev.cells.len() + 4 + uniform);
    for s in [prev, next] {
        ks.extend_from_slice(&s.cells);
        ks.push(s.ghost_left);
        ks.push(s.ghost_right);
    }
    let lo = ks.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta = if hi > lo { 0.05 * (hi - lo) } else { 0.05 };
    let (lo, hi) = (lo - delta, hi + delta);
    if uniform == 1 {
        ks.push(0.5 * (lo + hi));
    } else {
        ks.extend((0..uniform).map(|i| lo + (hi - lo) * i as f64 / (uniform - 1) as f64));
    }
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

fn residuals_for_k(
    ef: &EntropyFunctionals,
    next: &SolverState,
    k: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let prev = ef.state;
    let n = prev.cells.len();
    let lambda = ef.mesh.lambda;
    let mut g = Vec::with_capacity(n + 1);
    let mut l = Vec::with_capacity(n + 1);
    let mut fk = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let (u, v) = (prev.value(i), prev.value(i + 1));
        g.push(ef.g(i, k, u, v)?);
        l.push(ef.l(i, k, u, v)?);
        fk.push(evaluate_flux(
            ef.model,
            prev.t,
            ef.mesh.interface(i),
            k,
            prev.interface_r[i],
        )?);
    }
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for j in 1..=n {
        let (old, new) = (prev.cells[j - 1], next.cells[j - 1]);
        let df = fk[j] - fk[j - 1];
        plus.push(pos(new - k) - pos(old - k) + lambda * (g[j] - g[j - 1]) + lambda * sgn_plus(new - k) * df);
        minus.push(neg(new - k) - neg(old - k) + lambda * (l[j] - l[j - 1]) + lambda * sgn_minus(new - k) * df);
    }
    Ok((plus, minus))
}

fn merge_max(mut a: (Vec<f64>, Vec<f64>), b: (Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    for (x, y) in a.0.iter_mut().zip(&b.0) {
        *x = x.max(*y);
    }
    for (x, y) in a.1.iter_mut().zip(&b.1) {
        *x = x.max(*y);
    }
    a
}

/// Residuals of both discrete entropy inequalities for the step `prev -> next`;
/// the inequalities assert they are `<= 0`.
pub fn entropy_residuals(
    prev: &SolverState,
    next: &SolverState,
    mesh: &Mesh,
    model: &dyn FluxModel,
    k_grid: &[f64],
) -> Result<EntropyResiduals> {
    check_consecutive(prev, next)?;
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("entropy k grid is empty".into()));
    }
    let ef = EntropyFunctionals { model, mesh, state: prev };
    let n = prev.cells.len();
    let init = || (vec![f64::NEG_INFINITY; n], vec![f64::NEG_INFINITY; n]);
    let (per_cell_plus, per_cell_minus) = k_grid
        .par_iter()
        .map(|&k| residuals_for_k(&ef, next, k))
        .try_fold(init, |acc, r| r.map(|r| merge_max(acc, r)))
        .try_reduce(init, |a, b| Ok(merge_max(a, b)))?;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EntropyResiduals {
        plus_max: max(&per_cell_plus),
        minus_max: max(&per_cell_minus),
        per_cell_plus,
        per_cell_minus,
    })
}

/// Whether bound violations abort the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    #[default]
    Monitor,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Positivity,
    L1,
    Linf,
    Tv,
    TimeDiff,
    EntropyPlus,
    EntropyMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub kind: BoundKind,
    pub measured: f64,
    pub bound: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} at step {} (t = {}): measured {:e} exceeds bound {:e}",
            self.kind, self.step, self.t, self.measured, self.bound
        )
    }
}

impl Violation {
    pub fn into_error(self) -> Error {
        Error::BoundViolation {
            step: self.step,
            detail: self.to_string(),
        }
    }
}

/// Index of the tabulated time matching `record`.
fn constants_index(record: &DiagnosticsRecord, constants: &ConstantsReport) -> Option<usize> {
    let t = &constants.t;
    if t.is_empty() {
        return None;
    }
    let tol = 1e-9 * t.last().unwrap().abs().max(1.0);
    if record.step < t.len() && (t[record.step] - record.t).abs() <= tol {
        return Some(record.step);
    }
    let i = t.partition_point(|&s| s < record.t - tol);
    (i < t.len() && (t[i] - record.t).abs() <= tol).then_some(i)
}

/// Fills the margins of `record` and returns the violations found.
pub fn compare_bounds(record: &mut DiagnosticsRecord, constants: &ConstantsReport) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |kind, measured: f64, bound: f64, tol: f64| {
        if measured.is_nan() || measured > bound + tol {
            out.push(Violation {
                step: record.step,
                t: record.t,
                kind,
                measured,
                bound,
            });
        }
    };
    if record.min < -TOL_POSITIVITY || record.min.is_nan() {
        flag(BoundKind::Positivity, -record.min, 0.0, TOL_POSITIVITY);
    }
    if let Some(v) = record.entropy_plus_max {
        flag(BoundKind::EntropyPlus, v, 0.0, TOL_ENTROPY);
    }
    if let Some(v) = record.entropy_minus_max {
        flag(BoundKind::EntropyMinus, v, 0.0, TOL_ENTROPY);
    }
    let Some(i) = constants_index(record, constants) else {
        return out;
    };
    record.margin_l1 = Some(constants.c1[i] - record.l1);
    flag(BoundKind::L1, record.l1, constants.c1[i], TOL_L1);
    record.margin_linf = Some(constants.linf_bound[i] - record.linf);
    flag(BoundKind::Linf, record.linf, constants.linf_bound[i], TOL_LINF);
    record.margin_tv = Some(constants.cx[i] - record.tv);
    flag(BoundKind::Tv, record.tv, constants.cx[i], TOL_TV);
    if let (Some(td), Some(gj)) = (record.time_diff, record.ghost_jump) {
        if i > 0 {
            let bound = gj + (constants.t[i] - constants.t[i - 1]) * constants.ct[i - 1];
            record.margin_timediff = Some(bound - td);
            flag(BoundKind::TimeDiff, td, bound, TOL_TIME_DIFF);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{FluxBounds, LinearAdvection, ValidityBox, ZeroFlux};
    use crate::grid::Mesh;
    use crate::kernel::{build_discrete_kernel, Discretization, Triweight};

    fn mesh3(lambda: f64) -> Mesh {
        let fb = FluxBounds::new(1.0, 1e-6, 0.0, 0.0, ValidityBox::unit());
        // dx = 1, dt = lambda
        Mesh {
            a: 0.0,
            b: 3.0,
            n_cells: 3,
            dx: 1.0,
            dt: lambda,
            lambda,
            alpha: fb.l.max(1.0),
            t_final: lambda,
            n_steps: 1,
        }
    }

    fn state(step: usize, t: f64, cells: Vec<f64>, gl: f64, gr: f64, mesh: &Mesh) -> SolverState {
        let dk = build_discrete_kernel(&Triweight { h: 2.0 }, mesh, Discretization::Midpoint).unwrap();
        SolverState::new(step, t, cells, gl, gr, &dk).unwrap()
    }

    #[test]
    fn measure_hand_example() {
        let mesh = mesh3(0.2);
        let s = state(0, 0.0, vec![1.0, 0.0, 0.0], 0.0, 0.0, &mesh);
        let r = measure(&s, &mesh);
        assert_eq!(r.l1, 1.0);
        assert_eq!(r.tv, 2.0);
        assert_eq!(r.linf, 1.0);
        assert_eq!(r.mass, r.l1);
    }

    #[test]
    fn constant_state_has_zero_tv() {
        let mesh = mesh3(0.2);
        let s = state(0, 0.0, vec![0.3; 3], 0.3, 0.3, &mesh);
        let r = measure(&s, &mesh);
        assert_eq!(r.tv, 0.0);
        assert!((r.l1 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_flux_constant_state_has_zero_residuals() {
        let mesh = mesh3(0.2);
        let a = state(0, 0.0, vec![0.4; 3], 0.4, 0.4, &mesh);
        let b = state(1, 0.2, vec![0.4; 3], 0.4, 0.4, &mesh);
        for k in [-1.0, 0.0, 0.4, 0.7] {
            let r = entropy_residuals(&a, &b, &mesh, &ZeroFlux, &[k]).unwrap();
            assert_eq!(r.plus_max, 0.0);
            assert_eq!(r.minus_max, 0.0);
        }
    }

    #[test]
    fn k_above_range_kills_plus_residual() {
        let mesh = mesh3(0.2);
        let adv = LinearAdvection { c: 1.0 };
        let a = state(0, 0.0, vec![1.0, 0.0, 0.0], 0.0, 0.0, &mesh);
        let b = state(1, 0.2, vec![0.8, 0.2, 0.0], 0.0, 0.0, &mesh);
        let r = entropy_residuals(&a, &b, &mesh, &adv, &[1.5]).unwrap();
        assert!(r.per_cell_plus.iter().all(|&v| v == 0.0), "{:?}", r.per_cell_plus);
    }

    #[test]
    fn advection_hand_example_term_by_term() {
        let mesh = mesh3(0.2);
        let adv = LinearAdvection { c: 1.0 };
        let a = state(0, 0.0, vec![1.0, 0.0, 0.0], 0.0, 0.0, &mesh);
        let b = state(1, 0.2, vec![0.8, 0.2, 0.0], 0.0, 0.0, &mesh);
        let k = 0.5;
        let r = entropy_residuals(&a, &b, &mesh, &adv, &[k]).unwrap();
        // Upwind: F(u, v) = u, so G(u, v) = max(u, k) - k and f(k) - f(k) = 0.
        let v = [0.0, 1.0, 0.0, 0.0, 0.0];
        let w = [0.0, 0.8, 0.2, 0.0, 0.0];
        let g = |u: f64| u.max(k) - k;
        for j in 1..=3 {
            let oracle = (w[j] - k).max(0.0) - (v[j] - k).max(0.0) + 0.2 * (g(v[j]) - g(v[j - 1]));
            assert!((r.per_cell_plus[j - 1] - oracle).abs() < 1e-15);
        }
        assert!(r.plus_max <= 1e-12 && r.minus_max <= 1e-12);
    }

    #[test]
    fn g_and_l_vanish_on_the_diagonal_and_add_up() {
        let mesh = mesh3(0.2);
        let s = state(0, 0.0, vec![0.1, 0.6, 0.3], 0.2, 0.0, &mesh);
        let model = crate::flux::NonlocalLwr { v_max: 1.0, rho_max: 1.0 };
        let ef = EntropyFunctionals { model: &model, mesh: &mesh, state: &s };
        for i in 0..=3 {
            for k in [0.0, 0.25, 0.9] {
                assert_eq!(ef.g(i, k, k, k).unwrap(), 0.0);
                assert_eq!(ef.l(i, k, k, k).unwrap(), 0.0);
                let (u, v) = (0.7, 0.1);
                let sum = ef.g(i, k, u, v).unwrap() + ef.l(i, k, u, v).unwrap();
                let direct = ef.flux(i, u.max(k), v.max(k)).unwrap() - ef.flux(i, u.min(k), v.min(k)).unwrap();
                assert!((sum - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn h_reproduces_the_update() {
        let mesh = mesh3(0.2);
        let adv = LinearAdvection { c: 1.0 };
        let s = state(0, 0.0, vec![1.0, 0.0, 0.0], 0.0, 0.0, &mesh);
        let ef = EntropyFunctionals { model: &adv, mesh: &mesh, state: &s };
        assert!((ef.h(1, 0.0, 1.0, 0.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((ef.h(2, 1.0, 0.0, 0.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn non_consecutive_states_are_rejected() {
        let mesh = mesh3(0.2);
        let a = state(0, 0.0, vec![0.0; 3], 0.0, 0.0, &mesh);
        assert!(matches!(
            entropy_residuals(&a, &a, &mesh, &ZeroFlux, &[0.0]),
            Err(Error::StateMismatch { .. })
        ));
    }

    #[test]
    fn k_grid_spans_the_data() {
        let mesh = mesh3(0.2);
        let a = state(0, 0.0, vec![0.0, 1.0, 0.0], 0.0, 0.0, &mesh);
        let b = state(1, 0.2, vec![0.1, 0.8, 0.1], 0.0, 0.0, &mesh);
        let ks = default_k_grid(&a, &b, 32);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert!(ks[0] < 0.0 && *ks.last().unwrap() > 1.0);
        assert!(ks.contains(&0.8));
    }

    fn report(n: usize) -> ConstantsReport {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let v = |x: f64| vec![x; n];
        ConstantsReport {
            t,
            alpha: 1.0,
            l: 1.0,
            c: 1.0,
            cal_l: 1.0,
            cal_w: 1.0,
            c1: v(2.0),
            c2: v(1.0),
            linf_bound: v(1.5),
            k1: v(0.0),
            k2: v(0.0),
            k3: v(0.0),
            k4: v(0.0),
            cx: v(4.0),
            ct: v(10.0),
            cxt: v(0.0),
            r1: v(0.0),
            rinf: v(0.0),
            t1: v(0.0),
            t2: v(0.0),
            t2_c1: v(0.0),
            tv_bound: v(0.0),
            ct_theorem: v(0.0),
            time_lipschitz: v(0.0),
        }
    }

    #[test]
    fn zero_solution_margins_equal_the_bounds() {
        let mesh = mesh3(0.2);
        let s = state(1, 0.1, vec![0.0; 3], 0.0, 0.0, &mesh);
        let mut r = measure(&s, &mesh);
        r.time_diff = Some(0.0);
        r.ghost_jump = Some(0.0);
        let v = compare_bounds(&mut r, &report(5));
        assert!(v.is_empty());
        assert_eq!(r.margin_l1, Some(2.0));
        assert_eq!(r.margin_linf, Some(1.5));
        assert_eq!(r.margin_tv, Some(4.0));
        assert!((r.margin_timediff.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corrupted_cell_flags_exactly_one_linf_violation() {
        let mesh = Mesh {
            a: 0.0,
            b: 0.03,
            n_cells: 3,
            dx: 0.01,
            dt: 0.002,
            lambda: 0.2,
            alpha: 1.0,
            t_final: 0.002,
            n_steps: 1,
        };
        let s = state(2, 0.2, vec![0.0, 1.6, 0.0], 0.0, 0.0, &mesh);
        let mut r = measure(&s, &mesh);
        let v = compare_bounds(&mut r, &report(5));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, BoundKind::Linf);
        assert!(r.margin_linf.unwrap() < 0.0);
    }
}
