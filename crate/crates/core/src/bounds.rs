//! A-priori constants: L1, L∞, BV and time-continuity bounds of the discrete
//! solution, the continuous-level bound curves, and the Lipschitz-stability
//! chain for two solutions with different data.
//!
//! All curves are tabulated on step times. Data norms come from the projected
//! (cell and slab averaged) data, which is what the discrete estimates use.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::FluxBounds;
use crate::grid::{Mesh, ProjectedData};
use crate::kernel::KernelNorms;

/// `(e^{k t} - 1) / k`, with the `k -> 0` limit `t`.
fn growth(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        t
    } else {
        (k * t).exp_m1() / k
    }
}

/// Data norms of the projected data, as cumulative tables over step indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DataNorms {
    pub dt: f64,
    pub dx: f64,
    pub l1_initial: f64,
    pub linf_initial: f64,
    /// `Σ_{j=1}^{N-1} |ρ_{j+1}^0 - ρ_j^0|`.
    pub tv_initial: f64,
    /// `Σ_{j=0}^{N} |ρ_{j+1}^0 - ρ_j^0|`, ghosts `ρ_a^0`, `ρ_b^0` included.
    pub tv_initial_ghosts: f64,
    /// `dt Σ_{m<n} ρ_a^m`.
    pub l1_left: Vec<f64>,
    pub l1_right: Vec<f64>,
    /// `max_{m<=n} ρ_a^m`.
    pub linf_left: Vec<f64>,
    pub linf_right: Vec<f64>,
    /// `Σ_{m=1}^n |ρ_a^m - ρ_a^{m-1}|`.
    pub tv_left: Vec<f64>,
    pub tv_right: Vec<f64>,
}

fn cumulative_l1(v: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for x in v {
        out.push(dt * acc);
        acc += x.abs();
    }
    out
}

fn cumulative_max(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0_f64, |m, x| {
            *m = m.max(x.abs());
            Some(*m)
        })
        .collect()
}

fn cumulative_tv(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += (w[1] - w[0]).abs();
        out.push(acc);
    }
    out
}

impl DataNorms {
    pub fn from_projected(mesh: &Mesh, p: &ProjectedData) -> DataNorms {
        let rho0 = &p.rho0;
        let n = rho0.len();
        let tv_initial: f64 = rho0.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        DataNorms {
            dt: mesh.dt,
            dx: mesh.dx,
            l1_initial: mesh.dx * rho0.iter().map(|v| v.abs()).sum::<f64>(),
            linf_initial: rho0.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            tv_initial,
            tv_initial_ghosts: tv_initial + (rho0[0] - p.left[0]).abs() + (p.right[0] - rho0[n - 1]).abs(),
            l1_left: cumulative_l1(&p.left, mesh.dt),
            l1_right: cumulative_l1(&p.right, mesh.dt),
            linf_left: cumulative_max(&p.left),
            linf_right: cumulative_max(&p.right),
            tv_left: cumulative_tv(&p.left),
            tv_right: cumulative_tv(&p.right),
        }
    }

    /// Number of tabulated step indices.
    pub fn len(&self) -> usize {
        self.l1_left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l1_left.is_empty()
    }

    /// Step index of time `t` (clamped to the table).
    pub fn index_of(&self, t: f64) -> usize {
        let n = (t / self.dt + 1e-9).floor().max(0.0) as usize;
        n.min(self.len() - 1)
    }

    /// `max{‖ρ_o‖∞, ‖ρ_a‖∞, ‖ρ_b‖∞}` up to step `n`.
    pub fn data_max(&self, n: usize) -> f64 {
        self.linf_initial.max(self.linf_left[n]).max(self.linf_right[n])
    }
}

/// Bound curves tabulated on `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub t: Vec<f64>,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub cal_l: f64,
    pub cal_w: f64,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// `e^{C2 t} max-data`.
    pub linf_bound: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub k3: Vec<f64>,
    pub k4: Vec<f64>,
    pub cx: Vec<f64>,
    pub ct: Vec<f64>,
    pub cxt: Vec<f64>,
    pub r1: Vec<f64>,
    pub rinf: Vec<f64>,
    pub t1: Vec<f64>,
    /// With `K2`, `K3` evaluated at `R1`.
    pub t2: Vec<f64>,
    /// With `K2`, `K3` evaluated at `C1`.
    pub t2_c1: Vec<f64>,
    pub tv_bound: Vec<f64>,
    /// `C_t` with `alpha = L`.
    pub ct_theorem: Vec<f64>,
    /// Time-continuity bound for `tau = dt` ending at each `t`.
    pub time_lipschitz: Vec<f64>,
}

impl ConstantsReport {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Flat `name -> array` map; scalars are repeated along `t`.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.t.len();
        let rep = |v: f64| serde_json::json!(vec![v; n]);
        let mut map = serde_json::Map::new();
        let arrays: [(&str, &Vec<f64>); 19] = [
            ("t", &self.t),
            ("C1", &self.c1),
            ("C2", &self.c2),
            ("linf_bound", &self.linf_bound),
            ("K1", &self.k1),
            ("K2", &self.k2),
            ("K3", &self.k3),
            ("K4", &self.k4),
            ("Cx", &self.cx),
            ("Ct", &self.ct),
            ("Cxt", &self.cxt),
            ("R1", &self.r1),
            ("Rinf", &self.rinf),
            ("T1", &self.t1),
            ("T2", &self.t2),
            ("T2_C1", &self.t2_c1),
            ("tv_bound", &self.tv_bound),
            ("Ct_theorem", &self.ct_theorem),
            ("time_lipschitz", &self.time_lipschitz),
        ];
        for (k, v) in arrays {
            map.insert(k.to_string(), serde_json::json!(v));
        }
        map.insert("alpha".into(), rep(self.alpha));
        map.insert("L".into(), rep(self.l));
        map.insert("C".into(), rep(self.c));
        map.insert("cal_L".into(), rep(self.cal_l));
        map.insert("cal_W".into(), rep(self.cal_w));
        serde_json::Value::Object(map)
    }
}

/// Pieces of the BV chain that share one evaluation of the `L1` constant.
struct BvChain {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    cx: f64,
}

fn bv_chain(
    l1: f64,
    linf_bound: f64,
    cal_l: f64,
    cal_w: f64,
    fb: &FluxBounds,
    dn: &DataNorms,
    n: usize,
    t: f64,
) -> BvChain {
    let c = fb.c;
    let k1 = fb.sup_d_rhox + cal_l * l1 * fb.sup_d_rhor;
    let k3 = c * l1 * (cal_l * cal_l * l1 + 0.5 * cal_w);
    let k2 = c * l1 * (1.0 + 2.0 * cal_l * l1 + 2.0 * k3);
    let k4 = k2
        + 1.5 * c * (1.0 + cal_l * l1) * linf_bound
        + (k3 + 0.5 * c * (1.0 + cal_l * l1)) * dn.linf_left[n];
    let tv_data = dn.tv_initial_ghosts + dn.tv_left[n] + dn.tv_right[n];
    let cx = (k1 * t).exp() * tv_data + k4 * growth(k1, t);
    BvChain { k1, k2, k3, k4, cx }
}

/// Tabulates every a-priori constant on `t_grid` (step times of the mesh that
/// produced `dn`).
pub fn apriori_constants(
    kn: &KernelNorms,
    fb: &FluxBounds,
    dn: &DataNorms,
    alpha: f64,
    t_grid: &[f64],
) -> Result<ConstantsReport> {
    if !(kn.k_omega > 0.0) {
        return Err(Error::MissingNorm("K_omega must be positive"));
    }
    for (name, v) in [
        ("L", fb.l),
        ("C", fb.c),
        ("sup |d2 f / drho dx|", fb.sup_d_rhox),
        ("sup |d2 f / drho dR|", fb.sup_d_rhor),
    ] {
        if !v.is_finite() {
            return Err(Error::MissingNorm(name));
        }
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("t_grid must be sorted".into()));
    }
    let (l, c) = (fb.l, fb.c);
    let cal_l = kn.cal_l();
    let cal_w = kn.cal_w();
    let mut r = ConstantsReport {
        t: t_grid.to_vec(),
        alpha,
        l,
        c,
        cal_l,
        cal_w,
        c1: vec![],
        c2: vec![],
        linf_bound: vec![],
        k1: vec![],
        k2: vec![],
        k3: vec![],
        k4: vec![],
        cx: vec![],
        ct: vec![],
        cxt: vec![],
        r1: vec![],
        rinf: vec![],
        t1: vec![],
        t2: vec![],
        t2_c1: vec![],
        tv_bound: vec![],
        ct_theorem: vec![],
        time_lipschitz: vec![],
    };
    for &t in t_grid {
        let n = dn.index_of(t);
        let boundary_l1 = dn.l1_left[n] + dn.l1_right[n];
        let data_max = dn.data_max(n);
        let (linf_a, linf_b) = (dn.linf_left[n], dn.linf_right[n]);

        let c1 = dn.l1_initial + alpha * boundary_l1;
        let c2 = c * (1.0 + cal_l * c1);
        let linf_bound = (c2 * t).exp() * data_max;
        let bv = bv_chain(c1, linf_bound, cal_l, cal_w, fb, dn, n, t);
        let ct = (alpha + l) * bv.cx
            + c * c1 * (1.0 + cal_l * c1)
            + 0.5 * c * (linf_b + cal_l * c1 * linf_a);
        let cxt = t * (1.0 + alpha + l) * bv.cx
            + t * c * c1 * (1.0 + cal_l * c1)
            + t * 0.5 * c * (linf_b + cal_l * c1 * linf_a)
            + dn.dx * (dn.tv_left[n] + dn.tv_right[n]);

        // Continuous-level constants: C1 replaced by R1 (alpha -> L).
        let r1 = dn.l1_initial + l * boundary_l1;
        let rinf = (t * c * (1.0 + cal_l * r1)).exp() * data_max;
        let bv_r = bv_chain(r1, rinf, cal_l, cal_w, fb, dn, n, t);
        let t1 = bv_r.k1;
        let t2 = bv_r.k4;
        let tv_data = dn.tv_initial + dn.tv_left[n] + dn.tv_right[n];
        let tv_bound = (t * t1).exp() * tv_data + t2 * growth(t1, t);
        let ct_theorem = 2.0 * l * bv_r.cx
            + c * r1 * (1.0 + cal_l * r1)
            + 0.5 * c * (linf_b + cal_l * r1 * linf_a);
        let recent_tv = if n == 0 {
            0.0
        } else {
            (dn.tv_left[n] - dn.tv_left[n - 1]) + (dn.tv_right[n] - dn.tv_right[n - 1])
        };
        let time_lipschitz = dn.dt * (ct_theorem + 3.0 * l * recent_tv);

        r.c1.push(c1);
        r.c2.push(c2);
        r.linf_bound.push(linf_bound);
        r.k1.push(bv.k1);
        r.k2.push(bv.k2);
        r.k3.push(bv.k3);
        r.k4.push(bv.k4);
        r.cx.push(bv.cx);
        r.ct.push(ct);
        r.cxt.push(cxt);
        r.r1.push(r1);
        r.rinf.push(rinf);
        r.t1.push(t1);
        r.t2.push(t2);
        r.t2_c1.push(bv.k4);
        r.tv_bound.push(tv_bound);
        r.ct_theorem.push(ct_theorem);
        r.time_lipschitz.push(time_lipschitz);
    }
    Ok(r)
}

/// `L1` distances between the two data sets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DataDistances {
    pub initial: f64,
    pub left: f64,
    pub right: f64,
}

impl DataDistances {
    /// Distances between projected data over the first `n_steps` slabs.
    pub fn between(mesh: &Mesh, rho: &ProjectedData, sigma: &ProjectedData) -> DataDistances {
        let l1 = |u: &[f64], v: &[f64], h: f64, len: usize| -> f64 {
            h * u.iter().zip(v).take(len).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        DataDistances {
            initial: l1(&rho.rho0, &sigma.rho0, mesh.dx, mesh.n_cells),
            left: l1(&rho.left, &sigma.left, mesh.dt, mesh.n_steps),
            right: l1(&rho.right, &sigma.right, mesh.dt, mesh.n_steps),
        }
    }
}

/// Constants of the two-solution stability estimate at a single time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub t: f64,
    pub r1: f64,
    pub s1: f64,
    pub j: f64,
    pub c5: f64,
    pub pinf: f64,
    pub hat_k: f64,
    pub sinf: f64,
    pub u: f64,
    pub t1_sigma: f64,
    pub t2_sigma: f64,
    pub t3: f64,
    pub t4: f64,
    pub a: f64,
    pub b: f64,
    /// `A (1 + B t e^{B t})`; infinite when it overflows.
    pub final_bound: f64,
    /// Natural log of `final_bound`, finite whenever `A > 0`.
    pub log_final_bound: f64,
    pub notes: Vec<String>,
}

/// `ln(A (1 + B t e^{B t}))` without overflow.
fn log_final(a: f64, b: f64, t: f64) -> f64 {
    if a <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let bt = b * t;
    let log_growth = if bt <= 0.0 {
        0.0
    } else if bt < 30.0 {
        (bt * bt.exp()).ln_1p()
    } else {
        // 1 + bt e^{bt} = bt e^{bt} (1 + e^{-bt}/bt)
        bt.ln() + bt + ((-bt).exp() / bt).ln_1p()
    };
    a.ln() + log_growth
}

/// Lipschitz-stability chain at time `t` for solutions `rho` (norms `dn_rho`)
/// and `sigma` (norms `dn_sigma`).
pub fn stability_constants(
    kn: &KernelNorms,
    fb: &FluxBounds,
    dn_rho: &DataNorms,
    dn_sigma: &DataNorms,
    distances: &DataDistances,
    domain_length: f64,
    t: f64,
) -> Result<StabilityReport> {
    if !(kn.k_omega > 0.0) {
        return Err(Error::MissingNorm("K_omega must be positive"));
    }
    if !fb.sup_d_rhor.is_finite() || !fb.sup_d_rhox.is_finite() {
        return Err(Error::MissingNorm("mixed second derivatives of the flux"));
    }
    let n = dn_rho.index_of(t);
    let (l, c) = (fb.l, fb.c);
    let cal_l = kn.cal_l();
    let cal_w = kn.cal_w();
    let w_k = kn.sup_over_k();

    let r1 = dn_rho.l1_initial + l * (dn_rho.l1_left[n] + dn_rho.l1_right[n]);
    let s1 = dn_sigma.l1_initial + l * (dn_sigma.l1_left[n] + dn_sigma.l1_right[n]);
    let sigma_max = dn_sigma.data_max(n);
    let sigma_a = dn_sigma.linf_left[n];

    let j = w_k * r1.max(s1);
    let c5 = fb.sup_d_rhox + fb.sup_d_rhor * cal_l * r1;
    let pinf = (c5 * t).exp() * sigma_max;
    // The last term multiplies the bound on ∂²_{xu} g, i.e. C5.
    let hat_k = 2.0 * domain_length * c * pinf * (1.0 + r1 * (2.0 * cal_l + cal_l * cal_l * r1 + cal_w))
        + 0.5 * (3.0 * pinf + sigma_a) * c5;
    let sinf = (t * c * (1.0 + cal_l * s1)).exp() * sigma_max;
    let u = sigma_max * (t * c * (1.0 + cal_l * s1) + t * c5).exp();

    let t1_sigma = fb.sup_d_rhox + cal_l * s1 * fb.sup_d_rhor;
    let k3_sigma = c * s1 * (cal_l * cal_l * s1 + 0.5 * cal_w);
    let k2_sigma = c * s1 * (1.0 + 2.0 * cal_l * s1 + 2.0 * k3_sigma);
    let t2_sigma = k2_sigma
        + 1.5 * c * (1.0 + cal_l * s1) * sinf
        + (k3_sigma + 0.5 * c * (1.0 + cal_l * s1)) * sigma_a;
    let t3 = fb.sup_d_rhox + cal_l * r1.min(s1) * fb.sup_d_rhor;
    let tv_sigma = dn_sigma.tv_initial + dn_sigma.tv_left[n] + dn_sigma.tv_right[n];
    let t4 = (t * t3).exp() * tv_sigma
        + (hat_k * (c5 * t).exp() * t).min(t2_sigma * growth(t1_sigma, t));

    let a = distances.initial + l * (distances.left + distances.right);
    let b = domain_length * c * u * (w_k * (1.0 + cal_l * r1) + cal_l)
        + 4.0 * c * u * w_k
        + fb.sup_d_rhor * w_k * t4;
    let final_bound = if a == 0.0 { 0.0 } else { a * (1.0 + b * t * (b * t).exp()) };
    let log_final_bound = log_final(a, b, t);
    Ok(StabilityReport {
        t,
        r1,
        s1,
        j,
        c5,
        pinf,
        hat_k,
        sinf,
        u,
        t1_sigma,
        t2_sigma,
        t3,
        t4,
        a,
        b,
        final_bound,
        log_final_bound,
        notes: vec![
            "T4: first min-branch taken as hatK * exp(C5 t) * t, the factor t carried over from the pi total-variation bound".into(),
            "hatK: last term multiplies C5 (bound on the mixed x-u derivative of the frozen flux)".into(),
            "all flux sup-norms evaluated on the declared validity box".into(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::ValidityBox;
    use crate::grid::AlphaPolicy;

    fn setup(
        rho0: Vec<f64>,
        left: f64,
        right: f64,
    ) -> (Mesh, FluxBounds, KernelNorms, DataNorms) {
        let fb = FluxBounds::new(1.0, 1.0, 0.0, 1.0, ValidityBox::unit());
        let n = rho0.len();
        let mesh = Mesh::build(0.0, 1.0, n, 0.5, AlphaPolicy::Auto, &fb, 1.0).unwrap();
        let p = ProjectedData {
            rho0,
            left: vec![left; mesh.n_steps + 1],
            right: vec![right; mesh.n_steps + 1],
        };
        let kn = KernelNorms {
            sup_w: 5.0,
            sup_w1: 50.0,
            sup_w2: 600.0,
            l1_w1: 10.0,
            l1_w2: 120.0,
            k_omega: 0.5,
        };
        let dn = DataNorms::from_projected(&mesh, &p);
        (mesh, fb, kn, dn)
    }

    fn grid(mesh: &Mesh) -> Vec<f64> {
        (0..=mesh.n_steps).map(|n| mesh.time(n)).collect()
    }

    #[test]
    fn zero_data_gives_trivial_constants() {
        let (mesh, fb, kn, dn) = setup(vec![0.0; 10], 0.0, 0.0);
        let r = apriori_constants(&kn, &fb, &dn, 1.0, &grid(&mesh)).unwrap();
        assert!(r.c1.iter().all(|&v| v == 0.0));
        assert!(r.c2.iter().all(|&v| v == fb.c));
        assert!(r.k2.iter().all(|&v| v == 0.0));
        assert!(r.k3.iter().all(|&v| v == 0.0));
        assert!(r.tv_bound.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c1_direct_evaluation() {
        // ‖ρ_o‖₁ = 1, α = 1, ‖ρ_a‖₁ = ‖ρ_b‖₁ = 0.5 on [0, 0.5]
        let (mesh, fb, kn, dn) = setup(vec![1.0; 10], 1.0, 1.0);
        let r = apriori_constants(&kn, &fb, &dn, 1.0, &[mesh.t_final]).unwrap();
        assert!((r.c1[0] - 2.0).abs() < 1e-12, "{}", r.c1[0]);
    }

    #[test]
    fn composition_identities() {
        let (mesh, fb, kn, dn) = setup((0..20).map(|i| 0.04 * i as f64).collect(), 0.3, 0.1);
        let r = apriori_constants(&kn, &fb, &dn, 1.3, &grid(&mesh)).unwrap();
        for i in 0..r.len() {
            assert_eq!(r.c2[i], fb.c * (1.0 + r.cal_l * r.c1[i]));
            let k3 = fb.c * r.c1[i] * (r.cal_l * r.cal_l * r.c1[i] + 0.5 * r.cal_w);
            assert_eq!(r.k3[i], k3);
        }
        for v in [&r.c1, &r.cx, &r.cxt, &r.r1, &r.tv_bound] {
            assert!(v.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn doubling_alpha_doubles_boundary_part_of_c1() {
        let (mesh, fb, kn, dn) = setup(vec![0.2; 8], 0.4, 0.7);
        let t = [mesh.t_final];
        let a = apriori_constants(&kn, &fb, &dn, 1.0, &t).unwrap();
        let b = apriori_constants(&kn, &fb, &dn, 2.0, &t).unwrap();
        let base = dn.l1_initial;
        assert!(((b.c1[0] - base) - 2.0 * (a.c1[0] - base)).abs() < 1e-14);
    }

    #[test]
    fn t1_is_k1_with_r1() {
        let (mesh, fb, kn, dn) = setup(vec![0.5; 8], 0.2, 0.0);
        let r = apriori_constants(&kn, &fb, &dn, 3.0, &grid(&mesh)).unwrap();
        for i in 0..r.len() {
            let t1 = fb.sup_d_rhox + r.cal_l * r.r1[i] * fb.sup_d_rhor;
            assert_eq!(r.t1[i], t1);
        }
    }

    #[test]
    fn identical_data_give_zero_bound() {
        let (mesh, fb, kn, dn) = setup(vec![0.5; 8], 0.2, 0.1);
        let s = stability_constants(&kn, &fb, &dn, &dn, &DataDistances::default(), 1.0, mesh.t_final).unwrap();
        assert_eq!(s.a, 0.0);
        assert_eq!(s.final_bound, 0.0);
    }

    #[test]
    fn log_final_bound_stays_finite_when_the_bound_overflows() {
        let v = log_final(1e-3, 1e6, 0.5);
        assert!(v.is_finite());
        assert!((v - ((1e-3_f64).ln() + (5e5_f64).ln() + 5e5)).abs() < 1e-6);
        let small = log_final(2.0, 0.1, 1.0);
        assert!((small - (2.0 * (1.0 + 0.1 * 0.1_f64.exp())).ln()).abs() < 1e-14);
    }
}
