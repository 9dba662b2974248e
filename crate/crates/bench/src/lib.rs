//! Shared fixtures for the benchmarks.

use std::path::Path;

use nonlocal_fv::{Problem, RunConfig};

/// Nonlocal LWR with a triweight kernel and a Riemann initial datum on `[0, 1]`.
pub const REFERENCE: &str = r#"{
    "domain": {"a": 0.0, "b": 1.0},
    "N": 200,
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

pub fn reference_config() -> RunConfig {
    RunConfig::from_json_str(REFERENCE, Path::new(".")).expect("reference config is valid")
}

/// The reference problem on `n_cells` cells with the CFL time step.
pub fn reference_problem(n_cells: usize) -> Problem {
    reference_config()
        .problem_with(n_cells, None)
        .expect("reference problem assembles")
}

/// Deterministic cell vector in `[0, 1]`.
pub fn sample_cells(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let x = (j as f64 + 0.5) / n as f64;
            0.5 + 0.4 * (7.0 * x).sin() * (3.0 * x).cos()
        })
        .collect()
}
