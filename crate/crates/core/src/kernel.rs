//! Boundary-aware convolution kernels.
//!
//! The non-local average at an interface only sees cells inside `[a, b]` and is
//! renormalised by the kernel mass `W` visible from that interface, so it never
//! needs values outside the domain.

use std::fmt::Debug;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::quadrature::GaussLegendre;

/// Cells above which the interface averages are computed in parallel.
const PARALLEL_CELLS: usize = 512;

/// Points of the per-cell rule used in cell-average mode.
pub const CELL_AVERAGE_POINTS: usize = 16;

const WINDOW_PANELS: usize = 8;

/// A C² convolution kernel with unit mass and compact support.
pub trait Kernel: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn evaluate(&self, y: f64) -> f64;
    fn derivative1(&self, y: f64) -> f64;
    fn derivative2(&self, y: f64) -> f64;
    /// `(lo, hi)` such that the kernel vanishes outside `[lo, hi]`.
    fn support(&self) -> (f64, f64);

    fn support_radius(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }
}

/// `ω(y) = 35/(32h) (1 - (y/h)²)³` on `[-h, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triweight {
    pub h: f64,
}

impl Kernel for Triweight {
    fn name(&self) -> &str {
        "triweight"
    }
    fn evaluate(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        35.0 / (32.0 * self.h) * s * s * s
    }
    fn derivative1(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        -105.0 / (16.0 * self.h * self.h) * u * s * s
    }
    fn derivative2(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        -105.0 / (16.0 * self.h.powi(3)) * s * (1.0 - 5.0 * u * u)
    }
    fn support(&self) -> (f64, f64) {
        (-self.h, self.h)
    }
}

/// Look-ahead kernel `ω(y) = (140/h) (u (1-u))³`, `u = y/h`, on `[0, h]`.
///
/// It vanishes behind the evaluation point, so `W(b) = 0` and the kernel is
/// rejected on any bounded domain whose right end is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookAhead {
    pub h: f64,
}

impl Kernel for LookAhead {
    fn name(&self) -> &str {
        "lookahead"
    }
    fn evaluate(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let p = u * (1.0 - u);
        140.0 / self.h * p * p * p
    }
    fn derivative1(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let p = u * (1.0 - u);
        420.0 / (self.h * self.h) * p * p * (1.0 - 2.0 * u)
    }
    fn derivative2(&self, y: f64) -> f64 {
        let u = y / self.h;
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let p = u * (1.0 - u);
        let dp = 1.0 - 2.0 * u;
        420.0 / self.h.powi(3) * (2.0 * p * dp * dp - 2.0 * p * p)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `ω^k = ω((k - 1/2) dx)`.
    #[default]
    Midpoint,
    /// `ω^k = (1/dx) ∫_{(k-1)dx}^{k dx} ω`.
    CellAverage,
}

/// Tabulated kernel weights and interface masses on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    pub dx: f64,
    pub n_cells: usize,
    /// Smallest offset `k - j` with a stored weight.
    pub offset_min: i64,
    /// `ω^{offset_min + i}`; offsets outside the table carry zero weight.
    pub weights: Vec<f64>,
    /// `W_{j+1/2}`, `j = 0..=N`.
    pub interface_mass: Vec<f64>,
    pub k_omega_discrete: f64,
    pub mode: Discretization,
}

impl DiscreteKernel {
    /// `ω^{offset}`; zero outside the table.
    pub fn weight(&self, offset: i64) -> f64 {
        let i = offset - self.offset_min;
        if i < 0 || i as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[i as usize]
        }
    }

    pub fn offset_max(&self) -> i64 {
        self.offset_min + self.weights.len() as i64 - 1
    }

    /// Cells `k` in `1..=N` with possibly nonzero weight seen from interface `j`.
    fn cell_range(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        let n = self.n_cells as i64;
        let lo = (j as i64 + self.offset_min).max(1);
        let hi = (j as i64 + self.offset_max()).min(n);
        if lo > hi {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        lo as usize..=hi as usize
    }

    fn weighted_sum(&self, j: usize, cells: &[f64]) -> f64 {
        let range = self.cell_range(j);
        if range.is_empty() {
            return 0.0;
        }
        let (lo, hi) = (*range.start(), *range.end());
        let w0 = (lo as i64 - j as i64 - self.offset_min) as usize;
        self.weights[w0..w0 + (hi - lo + 1)]
            .iter()
            .zip(&cells[lo - 1..hi])
            .map(|(w, c)| w * c)
            .sum()
    }

    /// All weights are nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0.0)
    }
}

/// Tabulates `ω^k` and `W_{j+1/2} = dx Σ_{k=1}^N ω^{k-j}`.
pub fn build_discrete_kernel(
    kernel: &dyn Kernel,
    mesh: &Mesh,
    mode: Discretization,
) -> Result<DiscreteKernel> {
    let n = mesh.n_cells;
    if n < 1 {
        return Err(Error::InvalidMesh("a mesh needs at least one cell".into()));
    }
    let dx = mesh.dx;
    let (lo, hi) = kernel.support();
    let n_i = n as i64;
    // ω^k can only be nonzero when ((k-1) dx, k dx) meets the support.
    let k_lo = ((lo / dx).floor() as i64).max(1 - n_i);
    let k_hi = ((hi / dx).ceil() as i64 + 1).min(n_i);
    let gl = GaussLegendre::new(CELL_AVERAGE_POINTS);
    let omega = |k: i64| match mode {
        Discretization::Midpoint => kernel.evaluate((k as f64 - 0.5) * dx),
        Discretization::CellAverage => {
            let a = (k - 1) as f64 * dx;
            let b = k as f64 * dx;
            // Integrate only over the part of the cell inside the support.
            let (a, b) = (a.max(lo), b.min(hi));
            if b <= a {
                0.0
            } else {
                gl.integrate(|y| kernel.evaluate(y), a, b, 1) / dx
            }
        }
    };
    let mut ks: Vec<(i64, f64)> = if k_lo <= k_hi {
        (k_lo..=k_hi).map(|k| (k, omega(k))).collect()
    } else {
        Vec::new()
    };
    while ks.last().is_some_and(|&(_, w)| w == 0.0) {
        ks.pop();
    }
    let first = ks.iter().position(|&(_, w)| w != 0.0).unwrap_or(ks.len());
    ks.drain(..first);
    let (offset_min, weights) = match ks.first() {
        Some(&(k0, _)) => (k0, ks.into_iter().map(|(_, w)| w).collect()),
        None => (0, Vec::new()),
    };

    let mut dk = DiscreteKernel {
        dx,
        n_cells: n,
        offset_min,
        weights,
        interface_mass: Vec::new(),
        k_omega_discrete: 0.0,
        mode,
    };
    let ones = vec![1.0; n];
    let mass: Vec<f64> = (0..=n).map(|j| dx * dk.weighted_sum(j, &ones)).collect();
    if let Some((j, &w)) = mass
        .iter()
        .enumerate()
        .find(|(_, &w)| !(w > 0.0) || !w.is_finite())
    {
        return Err(Error::NonPositiveWindow {
            interface: j,
            value: w,
        });
    }
    dk.k_omega_discrete = mass.iter().copied().fold(f64::INFINITY, f64::min);
    dk.interface_mass = mass;
    Ok(dk)
}

/// `R_{j+1/2} = (dx / W_{j+1/2}) Σ_{k=1}^N ω^{k-j} ρ_k` for `j = 0..=N`.
pub fn nonlocal_average(dk: &DiscreteKernel, cells: &[f64]) -> Result<Vec<f64>> {
    if cells.len() != dk.n_cells {
        return Err(Error::LengthMismatch {
            expected: dk.n_cells,
            got: cells.len(),
        });
    }
    let at = |j: usize| dk.dx / dk.interface_mass[j] * dk.weighted_sum(j, cells);
    let n = dk.n_cells;
    Ok(if n >= PARALLEL_CELLS {
        (0..=n).into_par_iter().map(at).collect()
    } else {
        (0..=n).map(at).collect()
    })
}

/// Norms of the kernel and the lower bound of the visible mass `W` on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNorms {
    pub sup_w: f64,
    pub sup_w1: f64,
    pub sup_w2: f64,
    pub l1_w1: f64,
    pub l1_w2: f64,
    pub k_omega: f64,
}

impl KernelNorms {
    /// `‖ω'‖∞/K + ‖ω‖∞ ‖ω'‖₁/K²`.
    pub fn cal_l(&self) -> f64 {
        let k = self.k_omega;
        self.sup_w1 / k + self.sup_w * self.l1_w1 / (k * k)
    }

    /// `2‖ω''‖∞/K + ‖ω‖∞‖ω''‖₁/K² + 2‖ω‖∞‖ω'‖₁²/K³ + 2‖ω'‖∞‖ω'‖₁/K²`.
    pub fn cal_w(&self) -> f64 {
        let k = self.k_omega;
        2.0 * self.sup_w2 / k
            + self.sup_w * self.l1_w2 / (k * k)
            + 2.0 * self.sup_w * self.l1_w1 * self.l1_w1 / (k * k * k)
            + 2.0 * self.sup_w1 * self.l1_w1 / (k * k)
    }

    /// `‖ω‖∞ / K_ω`.
    pub fn sup_over_k(&self) -> f64 {
        self.sup_w / self.k_omega
    }
}

/// Samples `|g|` on a grid and polishes the best sample by golden-section search.
fn sup_abs(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let (mut best_i, mut best) = (0, 0.0_f64);
    for i in 0..=n {
        let v = g(lo + i as f64 * h).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut a = lo + (best_i as f64 - 1.0).max(0.0) * h;
    let mut b = (lo + (best_i as f64 + 1.0) * h).min(hi);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let f = |y: f64| -g(y).abs();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    best.max(-fc).max(-fd)
}

/// `∫ |g|` on `[lo, hi]`: sign changes are bracketed on a grid, refined by
/// bisection, and each sign-definite piece is integrated by Gauss-Legendre.
fn l1_abs(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize, gl: &GaussLegendre) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut knots = vec![lo];
    let mut prev = g(lo);
    for i in 1..=n {
        let x = lo + i as f64 * h;
        let cur = g(x);
        if cur == 0.0 && i < n {
            knots.push(x);
        } else if prev * cur < 0.0 {
            let (mut a, mut b) = (x - h, x);
            let mut ga = prev;
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if ga * gm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    ga = gm;
                }
            }
            knots.push(0.5 * (a + b));
        }
        prev = cur;
    }
    knots.push(hi);
    knots
        .windows(2)
        .map(|w| gl.integrate(g, w[0], w[1], 4).abs())
        .sum()
}

/// Kernel norms by dense sampling and quadrature; `K_ω` is the minimum of
/// `W(x) = ∫_a^b ω(y - x) dy` over at least 1024 points of `[a, b]`, each by
/// composite Gauss-Legendre over the part of the support inside `[a, b]`.
pub fn kernel_norms(kernel: &dyn Kernel, mesh: &Mesh, quadrature_points: usize) -> Result<KernelNorms> {
    if quadrature_points < 64 {
        return Err(Error::InvalidArgument(format!(
            "kernel norms need at least 64 quadrature points, got {quadrature_points}"
        )));
    }
    let (lo, hi) = kernel.support();
    if !(hi > lo) {
        return Err(Error::DegenerateSupport);
    }
    let n = quadrature_points.max(1024);
    let gl = GaussLegendre::new(16);
    let w0 = |y: f64| kernel.evaluate(y);
    let w1 = |y: f64| kernel.derivative1(y);
    let w2 = |y: f64| kernel.derivative2(y);

    let window = |x: f64| {
        let from = mesh.a.max(x + lo);
        let to = mesh.b.min(x + hi);
        if to <= from {
            0.0
        } else {
            gl.integrate(|y| kernel.evaluate(y - x), from, to, WINDOW_PANELS)
        }
    };
    let hx = (mesh.b - mesh.a) / n as f64;
    let k_omega = (0..=n)
        .map(|i| window(mesh.a + i as f64 * hx))
        .fold(f64::INFINITY, f64::min);

    Ok(KernelNorms {
        sup_w: sup_abs(&w0, lo, hi, n),
        sup_w1: sup_abs(&w1, lo, hi, n),
        sup_w2: sup_abs(&w2, lo, hi, n),
        l1_w1: l1_abs(&w1, lo, hi, n, &gl),
        l1_w2: l1_abs(&w2, lo, hi, n, &gl),
        k_omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{FluxBounds, ValidityBox};
    use crate::grid::AlphaPolicy;

    fn mesh(a: f64, b: f64, n: usize) -> Mesh {
        let fb = FluxBounds::new(1.0, 1.0, 0.0, 0.0, ValidityBox::unit());
        Mesh::build(a, b, n, 0.1, AlphaPolicy::Auto, &fb, 1.0).unwrap()
    }

    #[test]
    fn triweight_midpoint_first_weight() {
        let m = mesh(0.0, 2.0, 4); // dx = 0.5
        let dk = build_discrete_kernel(&Triweight { h: 1.0 }, &m, Discretization::Midpoint).unwrap();
        // ω(0.25) = 35/32 (1 - 1/16)^3
        let expected = 35.0 / 32.0 * (15.0_f64 / 16.0).powi(3);
        assert!((dk.weight(1) - expected).abs() < 1e-15);
        assert!((dk.weight(1) - 0.90122).abs() < 1e-5);
    }

    #[test]
    fn even_kernel_masses_are_symmetric() {
        for (n, mode) in [(37, Discretization::Midpoint), (50, Discretization::CellAverage)] {
            let m = mesh(-0.3, 1.9, n);
            let dk = build_discrete_kernel(&Triweight { h: 0.35 }, &m, mode).unwrap();
            for j in 0..=n {
                let d = (dk.interface_mass[j] - dk.interface_mass[n - j]).abs();
                assert!(d < 1e-14, "j={j}: {d}");
            }
        }
    }

    #[test]
    fn cell_average_interior_mass_is_one() {
        let m = mesh(0.0, 1.0, 100);
        let dk = build_discrete_kernel(&Triweight { h: 0.2 }, &m, Discretization::CellAverage).unwrap();
        for j in 20..=80 {
            assert!((dk.interface_mass[j] - 1.0).abs() < 1e-12, "j={j}");
        }
        // boundary interfaces only see half the kernel
        assert!((dk.interface_mass[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lookahead_is_rejected_at_right_end() {
        let m = mesh(0.0, 1.0, 40);
        let err = build_discrete_kernel(&LookAhead { h: 0.2 }, &m, Discretization::Midpoint).unwrap_err();
        assert_eq!(
            err,
            Error::NonPositiveWindow {
                interface: 40,
                value: 0.0
            }
        );
    }

    #[test]
    fn signed_kernel_with_negative_window_is_rejected() {
        #[derive(Debug)]
        struct Dip;
        impl Kernel for Dip {
            fn name(&self) -> &str {
                "dip"
            }
            fn evaluate(&self, y: f64) -> f64 {
                // unit mass overall, but strongly negative on the left half
                let t = Triweight { h: 0.1 };
                t.evaluate(y - 0.1) * 3.0 - 2.0 * t.evaluate(y + 0.1)
            }
            fn derivative1(&self, _y: f64) -> f64 {
                0.0
            }
            fn derivative2(&self, _y: f64) -> f64 {
                0.0
            }
            fn support(&self) -> (f64, f64) {
                (-0.2, 0.2)
            }
        }
        let m = mesh(0.0, 1.0, 50);
        assert!(matches!(
            build_discrete_kernel(&Dip, &m, Discretization::Midpoint),
            Err(Error::NonPositiveWindow { .. })
        ));
    }

    #[test]
    fn constant_and_zero_cells() {
        let m = mesh(0.0, 1.0, 64);
        let dk = build_discrete_kernel(&Triweight { h: 0.2 }, &m, Discretization::Midpoint).unwrap();
        let r = nonlocal_average(&dk, &[0.37; 64]).unwrap();
        assert!(r.iter().all(|v| (v - 0.37).abs() < 1e-15));
        let r = nonlocal_average(&dk, &[0.0; 64]).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert_eq!(
            nonlocal_average(&dk, &[0.0; 63]),
            Err(Error::LengthMismatch {
                expected: 64,
                got: 63
            })
        );
    }

    #[test]
    fn unit_cell_response() {
        let m = mesh(0.0, 1.0, 40);
        let kernel = Triweight { h: 0.2 };
        let dk = build_discrete_kernel(&kernel, &m, Discretization::Midpoint).unwrap();
        let k0 = 5;
        let mut cells = vec![0.0; 40];
        cells[k0 - 1] = 1.0;
        let r = nonlocal_average(&dk, &cells).unwrap();
        for (j, rj) in r.iter().enumerate() {
            // ω^{k0-j} evaluated directly from the kernel
            let w = kernel.evaluate((k0 as f64 - j as f64 - 0.5) * m.dx);
            let expected = m.dx * w / dk.interface_mass[j];
            assert!((rj - expected).abs() < 1e-13, "j={j}");
        }
    }

    #[test]
    fn triweight_norms_match_closed_forms() {
        let m = mesh(0.0, 4.0, 40);
        let kn = kernel_norms(&Triweight { h: 1.0 }, &m, 1024).unwrap();
        assert!((kn.sup_w - 1.09375).abs() < 1e-14);
        // ‖ω'‖∞ = 21/(5√5) at u = 1/√5; ‖ω'‖₁ = 2ω(0)
        assert!((kn.sup_w1 - 21.0 / (5.0 * 5.0_f64.sqrt())).abs() < 1e-12);
        assert!((kn.l1_w1 - 2.0 * 1.09375).abs() < 1e-12);
        assert!(kn.l1_w1 >= 2.0 * kn.sup_w - 1e-12);
        // ‖ω''‖∞ = 105/16 at u = 0
        assert!((kn.sup_w2 - 105.0 / 16.0).abs() < 1e-12);
        // W(a) = 1/2
        assert!((kn.k_omega - 0.5).abs() < 1e-12);
    }

    #[test]
    fn k_omega_is_below_one_on_bounded_domain() {
        let m = mesh(0.0, 1.0, 10);
        for h in [0.05, 0.2, 0.6] {
            let kn = kernel_norms(&Triweight { h }, &m, 64).unwrap();
            assert!(kn.k_omega < 1.0 && kn.k_omega > 0.0, "h={h}");
        }
        // x = a sees only the right half of an even kernel
        let kn = kernel_norms(&Triweight { h: 0.2 }, &m, 64).unwrap();
        assert!((kn.k_omega - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_support() {
        let m = mesh(0.0, 1.0, 10);
        assert_eq!(
            kernel_norms(&Triweight { h: 0.0 }, &m, 64),
            Err(Error::DegenerateSupport)
        );
    }
}
