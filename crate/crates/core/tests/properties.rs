//! Randomized invariants of the kernel, scheme, projection and bound tables.

use std::path::Path;

use nonlocal_fv::bounds::DataNorms;
use nonlocal_fv::diagnostics::{default_k_grid, entropy_residuals, DEFAULT_K_UNIFORM};
use nonlocal_fv::grid::{project, project_initial, Datum};
use nonlocal_fv::kernel::nonlocal_average;
use nonlocal_fv::{Problem, ProblemData, RunConfig, SolverState};
use proptest::prelude::*;

fn config(n: usize, h: f64, discretization: &str, left: f64, right: f64) -> RunConfig {
    let text = format!(
        r#"{{
        "domain": {{"a": 0.0, "b": 1.0}}, "N": {n}, "T": 0.1,
        "kernel": {{"name": "triweight", "h": {h}, "discretization": "{discretization}"}},
        "flux": {{"name": "nonlocal-lwr", "params": {{"v_max": 1.0, "rho_max": 1.0}},
                  "box": {{"rho": [0.0, 1.0], "R": [0.0, 1.0]}}}},
        "data": {{"initial": {{"kind": "constant", "value": 0.5}},
                  "left": {{"kind": "constant", "value": {left}}},
                  "right": {{"kind": "constant", "value": {right}}}}}
    }}"#
    );
    RunConfig::from_json_str(&text, Path::new(".")).unwrap()
}

fn problem(n: usize, h: f64, left: f64, right: f64) -> Problem {
    config(n, h, "midpoint", left, right).problem().unwrap()
}

fn state(p: &Problem, cells: Vec<f64>) -> SolverState {
    let tr = &p.projected;
    SolverState::new(0, 0.0, cells, tr.left[0], tr.right[0], &p.dk).unwrap()
}

fn cells(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_matches_direct_sum(
        rho in cells(48),
        h in 0.05..0.6f64,
        cell_average in any::<bool>(),
    ) {
        let mode = if cell_average { "cell_average" } else { "midpoint" };
        let p = config(48, h, mode, 0.5, 0.5).problem().unwrap();
        let dk = &p.dk;
        let got = nonlocal_average(dk, &rho).unwrap();
        for (j, r) in got.iter().enumerate() {
            let mut mass = 0.0;
            let mut sum = 0.0;
            for k in 1..=48i64 {
                let w = dk.weight(k - j as i64);
                mass += dk.dx * w;
                sum += dk.dx * w * rho[k as usize - 1];
            }
            prop_assert!((r - sum / mass).abs() <= 1e-13, "j={j}: {r} vs {}", sum / mass);
            // A nonnegative kernel makes R a convex combination.
            let (lo, hi) = rho.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
            prop_assert!(*r >= lo - 1e-14 && *r <= hi + 1e-14);
        }
    }

    #[test]
    fn one_step_stays_in_the_unit_interval(
        rho in cells(40),
        left in 0.0..=1.0f64,
        right in 0.0..=1.0f64,
    ) {
        let p = problem(40, 0.2, left, right);
        let next = p.scheme().advance(&state(&p, rho)).unwrap().state;
        for v in &next.cells {
            prop_assert!(*v >= -1e-12 && *v <= 1.0 + 1e-12, "{v}");
        }
    }

    #[test]
    fn one_step_balances_mass(rho in cells(40), left in 0.0..=1.0f64, right in 0.0..=1.0f64) {
        let p = problem(40, 0.2, left, right);
        let s0 = state(&p, rho);
        let out = p.scheme().advance(&s0).unwrap();
        let mass = |s: &SolverState| p.mesh.dx * s.cells.iter().sum::<f64>();
        let residual = mass(&out.state) - mass(&s0) + p.mesh.dt * (out.flux_right - out.flux_left);
        prop_assert!(residual.abs() <= 1e-14, "{residual}");
    }

    #[test]
    fn entropy_residuals_vanish(rho in cells(24), left in 0.0..=1.0f64, right in 0.0..=1.0f64) {
        let p = problem(24, 0.25, left, right);
        let s0 = state(&p, rho);
        let s1 = p.scheme().advance(&s0).unwrap().state;
        let ks = default_k_grid(&s0, &s1, DEFAULT_K_UNIFORM);
        let r = entropy_residuals(&s0, &s1, &p.mesh, p.model.as_ref(), &ks).unwrap();
        prop_assert!(r.plus_max <= 1e-12, "{}", r.plus_max);
        prop_assert!(r.minus_max <= 1e-12, "{}", r.minus_max);
    }

    #[test]
    fn projection_preserves_the_mean(
        offset in 0.5..1.0f64,
        amplitude in 0.0..0.5f64,
        wavenumber in 0.5..20.0f64,
        phase in 0.0..6.3f64,
        n in 4usize..64,
    ) {
        let p = problem(n, 0.2, 0.5, 0.5);
        let f = move |x: f64| offset + amplitude * (wavenumber * x + phase).sin();
        let data = ProblemData::new(Datum::function(f), Datum::Constant(0.5), Datum::Constant(0.5));
        let avg = project_initial(&data, &p.mesh, 8).unwrap();
        let exact = offset + amplitude * ((phase).cos() - (wavenumber + phase).cos()) / wavenumber;
        let mean = p.mesh.dx * avg.iter().sum::<f64>();
        prop_assert!((mean - exact).abs() <= 1e-10, "{mean} vs {exact}");
        let (lo, hi) = (offset - amplitude, offset + amplitude);
        prop_assert!(avg.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn boundary_norm_tables_are_nondecreasing(
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
        wavenumber in 1.0..60.0f64,
    ) {
        let p = problem(32, 0.2, 0.5, 0.5);
        let data = ProblemData::new(
            Datum::Constant(0.3),
            Datum::Sine { offset: 0.5, amplitude: 0.5 * a, wavenumber, phase: 0.0 },
            Datum::Step { left: b, right: 1.0 - b, at: 0.05 },
        );
        let projected = project(&data, &p.mesh, 8).unwrap();
        let dn = DataNorms::from_projected(&p.mesh, &projected);
        for table in [&dn.l1_left, &dn.l1_right, &dn.linf_left, &dn.linf_right, &dn.tv_left, &dn.tv_right] {
            prop_assert_eq!(table.len(), p.mesh.n_steps + 1);
            prop_assert!(table.windows(2).all(|w| w[1] >= w[0]));
        }
        // Slab averages never exceed the datum's variation.
        let tv_right = (1.0 - 2.0 * b).abs();
        prop_assert!(dn.tv_right.last().unwrap() <= &(tv_right + 1e-12));
    }

    #[test]
    fn config_round_trips(n in 1usize..5000, h in 0.01..1.0f64, left in 0.0..1.0f64) {
        let cfg = config(n, h, "cell_average", left, 0.0);
        let back = RunConfig::from_json_str(&cfg.to_json_string(), Path::new(".")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
