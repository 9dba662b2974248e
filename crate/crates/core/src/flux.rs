//! Flux functions `f(t, x, rho, R)` and their bound constants.
//!
//! A model supplies the value and first partials; second partials default to
//! central differences of the first partials. Bound constants are taken on a
//! declared validity box rather than on all of `R^2`, since LWR-type fluxes
//! have unbounded `∂_rho f` in `R`.

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floor applied to `L` and `C` so the CFL restriction stays well defined.
pub const FLOOR: f64 = 1e-6;

/// Inflation applied to sampled sup-norms.
pub const SAFETY_FACTOR: f64 = 1.25;

const AUDIT_SEED: u64 = 0x5eed_f1a4;

fn fd_step(at: f64) -> f64 {
    f64::EPSILON.cbrt() * at.abs().max(1.0)
}

fn central(g: impl Fn(f64) -> f64, at: f64) -> f64 {
    let h = fd_step(at);
    (g(at + h) - g(at - h)) / (2.0 * h)
}

pub trait FluxModel: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn value(&self, t: f64, x: f64, rho: f64, r: f64) -> f64;
    fn d_rho(&self, t: f64, x: f64, rho: f64, r: f64) -> f64;
    fn d_x(&self, t: f64, x: f64, rho: f64, r: f64) -> f64;
    fn d_r(&self, t: f64, x: f64, rho: f64, r: f64) -> f64;

    fn d_xx(&self, t: f64, x: f64, rho: f64, r: f64) -> f64 {
        central(|s| self.d_x(t, s, rho, r), x)
    }
    fn d_xr(&self, t: f64, x: f64, rho: f64, r: f64) -> f64 {
        central(|s| self.d_x(t, x, rho, s), r)
    }
    fn d_rr(&self, t: f64, x: f64, rho: f64, r: f64) -> f64 {
        central(|s| self.d_r(t, x, rho, s), r)
    }
    fn d_rhox(&self, t: f64, x: f64, rho: f64, r: f64) -> f64 {
        central(|s| self.d_rho(t, s, rho, r), x)
    }
    fn d_rhor(&self, t: f64, x: f64, rho: f64, r: f64) -> f64 {
        central(|s| self.d_rho(t, x, rho, s), r)
    }

    /// Closed-form bound constants on `bx`, when the model knows them.
    fn analytic_bounds(&self, _bx: &ValidityBox) -> Option<FluxBounds> {
        None
    }
}

/// Ranges of `(t, x, rho, R)` on which the flux constants hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub rho: (f64, f64),
    pub r: (f64, f64),
}

impl ValidityBox {
    /// `[0,1]^4`.
    pub fn unit() -> Self {
        Self {
            t: (0.0, 1.0),
            x: (0.0, 1.0),
            rho: (0.0, 1.0),
            r: (0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("t", self.t), ("x", self.x), ("rho", self.rho), ("R", self.r)] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::EmptyBox(format!("{name} range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains_rho(&self, rho: f64) -> bool {
        rho >= self.rho.0 && rho <= self.rho.1
    }

    pub fn contains_r(&self, r: f64) -> bool {
        r >= self.r.0 && r <= self.r.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsSource {
    Analytic,
    Sampled,
}

/// Constants of the flux assumptions on a validity box.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxBounds {
    /// Dominates `|∂_rho f|`.
    pub l: f64,
    /// Dominates `|∂_x f|/|rho|`, `|∂_R f|/|rho|`, and the `xx`, `xR`, `RR`
    /// second partials divided by `|rho|`.
    pub c: f64,
    pub sup_d_rhox: f64,
    pub sup_d_rhor: f64,
    pub validity_box: ValidityBox,
    pub source: BoundsSource,
}

impl FluxBounds {
    pub fn new(l: f64, c: f64, sup_d_rhox: f64, sup_d_rhor: f64, validity_box: ValidityBox) -> Self {
        Self {
            l: l.max(FLOOR),
            c: c.max(FLOOR),
            sup_d_rhox,
            sup_d_rhor,
            validity_box,
            source: BoundsSource::Analytic,
        }
    }
}

/// `f = rho v_max (1 - R / rho_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalLwr {
    pub v_max: f64,
    pub rho_max: f64,
}

impl FluxModel for NonlocalLwr {
    fn name(&self) -> &str {
        "nonlocal-lwr"
    }
    fn value(&self, _t: f64, _x: f64, rho: f64, r: f64) -> f64 {
        rho * self.v_max * (1.0 - r / self.rho_max)
    }
    fn d_rho(&self, _t: f64, _x: f64, _rho: f64, r: f64) -> f64 {
        self.v_max * (1.0 - r / self.rho_max)
    }
    fn d_x(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_r(&self, _t: f64, _x: f64, rho: f64, _r: f64) -> f64 {
        -rho * self.v_max / self.rho_max
    }
    fn d_xx(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_xr(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_rr(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_rhox(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_rhor(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        -self.v_max / self.rho_max
    }

    fn analytic_bounds(&self, bx: &ValidityBox) -> Option<FluxBounds> {
        let at = |r: f64| (self.v_max * (1.0 - r / self.rho_max)).abs();
        let l = at(bx.r.0).max(at(bx.r.1));
        let slope = (self.v_max / self.rho_max).abs();
        Some(FluxBounds::new(l, slope, 0.0, slope, *bx))
    }
}

/// `f = c rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearAdvection {
    pub c: f64,
}

impl FluxModel for LinearAdvection {
    fn name(&self) -> &str {
        "linear-advection"
    }
    fn value(&self, _t: f64, _x: f64, rho: f64, _r: f64) -> f64 {
        self.c * rho
    }
    fn d_rho(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        self.c
    }
    fn d_x(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_r(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn analytic_bounds(&self, bx: &ValidityBox) -> Option<FluxBounds> {
        Some(FluxBounds::new(self.c.abs(), 0.0, 0.0, 0.0, *bx))
    }
}

/// `f = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroFlux;

impl FluxModel for ZeroFlux {
    fn name(&self) -> &str {
        "zero-flux"
    }
    fn value(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_rho(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_x(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn d_r(&self, _t: f64, _x: f64, _rho: f64, _r: f64) -> f64 {
        0.0
    }
    fn analytic_bounds(&self, bx: &ValidityBox) -> Option<FluxBounds> {
        Some(FluxBounds::new(0.0, 0.0, 0.0, 0.0, *bx))
    }
}

/// Evaluates the flux, rejecting NaN and infinities.
pub fn evaluate_flux(model: &dyn FluxModel, t: f64, x: f64, rho: f64, r: f64) -> Result<f64> {
    let v = model.value(t, x, rho, r);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue {
            model: model.name().to_string(),
            t,
            x,
            rho,
            r,
        })
    }
}

fn sample_box(rng: &mut ChaCha8Rng, bx: &ValidityBox) -> (f64, f64, f64, f64) {
    let mut pick = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    (pick(bx.t), pick(bx.x), pick(bx.rho), pick(bx.r))
}

/// Sampled sup-norms of the quantities entering the flux constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampledSups {
    pub d_rho: f64,
    /// Largest of `|∂_x f|`, `|∂_R f|`, `|∂²_xx f|`, `|∂²_xR f|`, `|∂²_RR f|` over `|rho|`.
    pub c_ratio: f64,
    pub d_rhox: f64,
    pub d_rhor: f64,
}

/// Raw sampled sup-norms on `bx` (no safety factor).
pub fn sample_sups(model: &dyn FluxModel, bx: &ValidityBox, samples: usize, seed: u64) -> SampledSups {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SampledSups::default();
    for _ in 0..samples {
        let (t, x, rho, r) = sample_box(&mut rng, bx);
        s.d_rho = s.d_rho.max(model.d_rho(t, x, rho, r).abs());
        s.d_rhox = s.d_rhox.max(model.d_rhox(t, x, rho, r).abs());
        s.d_rhor = s.d_rhor.max(model.d_rhor(t, x, rho, r).abs());
        if rho.abs() > 1e-12 {
            let worst = [
                model.d_x(t, x, rho, r),
                model.d_r(t, x, rho, r),
                model.d_xx(t, x, rho, r),
                model.d_xr(t, x, rho, r),
                model.d_rr(t, x, rho, r),
            ]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
            s.c_ratio = s.c_ratio.max(worst / rho.abs());
        }
    }
    s
}

/// Bound constants on `bx`: the model's closed forms when available,
/// otherwise sampled sup-norms inflated by [`SAFETY_FACTOR`].
pub fn flux_bounds(model: &dyn FluxModel, bx: &ValidityBox, samples: usize) -> Result<FluxBounds> {
    bx.validate()?;
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "flux bound estimation needs at least 1000 samples, got {samples}"
        )));
    }
    if let Some(b) = model.analytic_bounds(bx) {
        return Ok(b);
    }
    let s = sample_sups(model, bx, samples, AUDIT_SEED);
    let mut b = FluxBounds::new(
        SAFETY_FACTOR * s.d_rho,
        SAFETY_FACTOR * s.c_ratio,
        SAFETY_FACTOR * s.d_rhox,
        SAFETY_FACTOR * s.d_rhor,
        *bx,
    );
    b.source = BoundsSource::Sampled;
    Ok(b)
}

/// Largest relative discrepancy between each supplied partial and a central
/// difference of the next-lower derivative, over `samples` random box points.
pub fn derivative_audit(model: &dyn FluxModel, bx: &ValidityBox, samples: usize, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED ^ 0xd1ff);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let cd = |g: &dyn Fn(f64) -> f64, at: f64| (g(at + step) - g(at - step)) / (2.0 * step);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (t, x, rho, r) = sample_box(&mut rng, bx);
        let checks = [
            (model.d_rho(t, x, rho, r), cd(&|s| model.value(t, x, s, r), rho)),
            (model.d_x(t, x, rho, r), cd(&|s| model.value(t, s, rho, r), x)),
            (model.d_r(t, x, rho, r), cd(&|s| model.value(t, x, rho, s), r)),
            (model.d_xx(t, x, rho, r), cd(&|s| model.d_x(t, s, rho, r), x)),
            (model.d_xr(t, x, rho, r), cd(&|s| model.d_x(t, x, rho, s), r)),
            (model.d_rr(t, x, rho, r), cd(&|s| model.d_r(t, x, rho, s), r)),
            (model.d_rhox(t, x, rho, r), cd(&|s| model.d_rho(t, s, rho, r), x)),
            (model.d_rhor(t, x, rho, r), cd(&|s| model.d_rho(t, x, rho, s), r)),
        ];
        for (a, b) in checks {
            worst = worst.max(rel(a, b));
        }
    }
    worst
}
