//! Grid self-convergence and the two-solution Lipschitz-stability experiment.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{stability_constants, DataDistances, StabilityReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Datum, Mesh, ProblemData};
use crate::solver::{solve, SolveOptions};

/// Averages groups of `ratio` fine cells into coarse cells.
pub fn restrict(fine: &[f64], ratio: usize) -> Vec<f64> {
    fine.chunks_exact(ratio)
        .map(|c| c.iter().sum::<f64>() / ratio as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub levels: Vec<usize>,
    pub n_steps: Vec<usize>,
    /// Identical on every level.
    pub lambda: f64,
    /// `‖ρ_k(T) - P ρ_{k+1}(T)‖₁` on level `k`'s mesh, `P` the cell averaging.
    pub differences: Vec<f64>,
    /// `log2(e_k / e_{k+1})`; `None` when undefined.
    pub orders: Vec<Option<f64>>,
    pub strictly_decreasing: bool,
}

/// Self-convergence over doubling levels at a fixed `lambda`, taken from the
/// CFL-driven step count of the coarsest level.
pub fn convergence_study(config: &RunConfig, levels: &[usize]) -> Result<ConvergenceResult> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) || levels[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "levels must double at each refinement, got {levels:?}"
        )));
    }
    let resolved = config.resolve()?;
    let fb = config.flux_bounds(&resolved)?;
    let coarse = Mesh::build(
        config.domain.a,
        config.domain.b,
        levels[0],
        config.t,
        config.alpha.policy(),
        &fb,
        config.cfl_safety,
    )?;
    let n_steps: Vec<usize> = levels
        .iter()
        .map(|&n| coarse.n_steps * (n / levels[0]))
        .collect();
    let finals = levels
        .par_iter()
        .zip(&n_steps)
        .map(|(&n, &steps)| {
            let problem = config.problem_from(&resolved, &resolved.data, &fb, n, Some(steps))?;
            let lambda = problem.mesh.lambda;
            let tr = solve(&problem, &SolveOptions::plain())?;
            Ok((tr.final_state().cells.clone(), lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    let lambda = finals[0].1;
    debug_assert!(finals.iter().all(|f| f.1 == lambda));
    let length = config.domain.b - config.domain.a;
    let differences: Vec<f64> = finals
        .windows(2)
        .zip(levels)
        .map(|(w, &n)| {
            let dx = length / n as f64;
            let fine = restrict(&w[1].0, 2);
            dx * w[0].0.iter().zip(&fine).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .collect();
    let orders = differences
        .windows(2)
        .map(|e| {
            let r = (e[0] / e[1]).log2();
            (e[0] > 0.0 && e[1] > 0.0 && r.is_finite()).then_some(r)
        })
        .collect();
    Ok(ConvergenceResult {
        levels: levels.to_vec(),
        n_steps,
        lambda,
        strictly_decreasing: differences.windows(2).all(|e| e[1] < e[0]),
        differences,
        orders,
    })
}

/// Which data a perturbation shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Initial,
    Left,
    Right,
    All,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Target> {
        match s {
            "initial" => Ok(Target::Initial),
            "left" => Ok(Target::Left),
            "right" => Ok(Target::Right),
            "all" => Ok(Target::All),
            other => Err(Error::InvalidArgument(format!(
                "unknown perturbation target {other:?}; expected initial, left, right or all"
            ))),
        }
    }
}

/// Constant shift `eps` of the targeted data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub eps: f64,
    pub target: Target,
}

impl Perturbation {
    pub fn apply(&self, data: &ProblemData) -> ProblemData {
        let shift = |d: &Datum, hit: bool| if hit { d.shifted(self.eps) } else { d.clone() };
        let t = self.target;
        let mut out = ProblemData::new(
            shift(&data.initial, matches!(t, Target::Initial | Target::All)),
            shift(&data.left, matches!(t, Target::Left | Target::All)),
            shift(&data.right, matches!(t, Target::Right | Target::All)),
        );
        // Declared sup/TV no longer describe the shifted data.
        out.declared = [None; 3];
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityResult {
    pub n_cells: usize,
    pub perturbation: Perturbation,
    pub distances: DataDistances,
    /// `‖ρ(T) - σ(T)‖₁`.
    pub measured: f64,
    pub a: f64,
    pub b: f64,
    pub final_bound: f64,
    pub log_final_bound: f64,
    /// `measured / final_bound`; 0 when the bound is infinite or both vanish.
    pub ratio: f64,
    /// `ln(measured) - ln(final_bound)`.
    pub log_ratio: f64,
    /// `measured / A`.
    pub measured_over_a: Option<f64>,
    pub report: StabilityReport,
}

/// Solves with the configured data and with perturbed data on one mesh and
/// compares the distance at `T` with the stability bound.
pub fn stability_experiment(
    config: &RunConfig,
    perturbation: Perturbation,
    n_cells: Option<usize>,
) -> Result<StabilityResult> {
    if !perturbation.eps.is_finite() {
        return Err(Error::InvalidArgument("perturbation eps must be finite".into()));
    }
    let n = n_cells.unwrap_or(config.n);
    let resolved = config.resolve()?;
    let fb = config.flux_bounds(&resolved)?;
    let rho = config.problem_from(&resolved, &resolved.data, &fb, n, None)?;
    let sigma_data = perturbation.apply(&resolved.data);
    let sigma = config.problem_from(&resolved, &sigma_data, &fb, n, Some(rho.mesh.n_steps))?;

    let (tr_rho, tr_sigma) = rayon::join(
        || solve(&rho, &SolveOptions::plain()),
        || solve(&sigma, &SolveOptions::plain()),
    );
    let (tr_rho, tr_sigma) = (tr_rho?, tr_sigma?);
    let mesh = &rho.mesh;
    let measured = mesh.dx
        * tr_rho
            .final_state()
            .cells
            .iter()
            .zip(&tr_sigma.final_state().cells)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let distances = DataDistances::between(mesh, &rho.projected, &sigma.projected);
    let report = stability_constants(
        &rho.kernel_norms,
        &fb,
        &rho.data_norms,
        &sigma.data_norms,
        &distances,
        mesh.length(),
        mesh.t_final,
    )?;
    let ratio = if measured == 0.0 || report.final_bound.is_infinite() {
        0.0
    } else {
        measured / report.final_bound
    };
    Ok(StabilityResult {
        n_cells: n,
        perturbation,
        distances,
        measured,
        a: report.a,
        b: report.b,
        final_bound: report.final_bound,
        log_final_bound: report.log_final_bound,
        ratio,
        log_ratio: measured.ln() - report.log_final_bound,
        measured_over_a: (report.a > 0.0).then(|| measured / report.a),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, flux: &str, initial: &str) -> RunConfig {
        let text = format!(
            r#"{{
            "domain": {{"a": 0.0, "b": 1.0}}, "N": {n}, "T": 0.2,
            "kernel": {{"name": "triweight", "h": 0.2}},
            "flux": {flux},
            "data": {{"initial": {initial},
                      "left": {{"kind": "constant", "value": 0.3}},
                      "right": {{"kind": "constant", "value": 0.3}}}}
        }}"#
        );
        RunConfig::from_json_str(&text, std::path::Path::new(".")).unwrap()
    }

    const LWR: &str = r#"{"name": "nonlocal-lwr", "box": {"rho": [0.0, 1.0], "R": [0.0, 1.0]}}"#;

    #[test]
    fn restriction_averages_pairs() {
        assert_eq!(restrict(&[1.0, 3.0, 0.0, 2.0], 2), vec![2.0, 1.0]);
    }

    #[test]
    fn constant_solution_has_undefined_orders() {
        let cfg = config(20, LWR, r#"{"kind": "constant", "value": 0.3}"#);
        let r = convergence_study(&cfg, &[20, 40, 80]).unwrap();
        assert!(r.differences.iter().all(|&e| e < 1e-14), "{:?}", r.differences);
        assert!(r.orders.iter().all(|o| o.is_none() || r.differences.iter().all(|&e| e < 1e-14)));
    }

    #[test]
    fn levels_must_double() {
        let cfg = config(20, LWR, r#"{"kind": "constant", "value": 0.3}"#);
        assert!(convergence_study(&cfg, &[20, 40]).is_err());
        assert!(convergence_study(&cfg, &[20, 40, 100]).is_err());
    }

    #[test]
    fn zero_perturbation_gives_zero_ratio() {
        let cfg = config(40, LWR, r#"{"kind": "sine", "offset": 0.4, "amplitude": 0.2, "wavenumber": 6.283185307179586}"#);
        let p = Perturbation { eps: 0.0, target: Target::Initial };
        let r = stability_experiment(&cfg, p, None).unwrap();
        assert_eq!(r.measured, 0.0);
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.a, 0.0);
    }

    #[test]
    fn shift_of_initial_datum_gives_a_eps_length() {
        let cfg = config(40, LWR, r#"{"kind": "step", "left": 0.5, "right": 0.1, "at": 0.5}"#);
        let p = Perturbation { eps: 1e-3, target: Target::Initial };
        let r = stability_experiment(&cfg, p, None).unwrap();
        assert!((r.a - 1e-3).abs() < 1e-15, "{}", r.a);
        assert!(r.measured > 0.0 && r.measured <= r.final_bound);
    }
}
