//! The functional
//!
//! ```text
//! J_λ(u) = ½∫|∇u|² − (1/2p) ∬ |u(x)|^p |u(y)|^p |x-y|^{-μ} − (λ/2)∫u²,   p = 2μ*
//! ```
//!
//! together with its weak gradient, the nonlocal norm `‖u‖_NL = D(u)^{1/2p}`
//! (`D` the double integral above), and the zero-homogeneous quotient
//! `Q_λ(u) = (∫|∇u|² − λ∫u²) / D(u)^{1/p}`.
//!
//! All quantities are the discrete ones: forward-difference gradients, node
//! weights `h^N` and the grid Riesz potential. The gradient is exact for the
//! discrete functional, not an approximation of the continuum one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{self, SharpConstants};
use crate::error::{Error, Result};
use crate::field::{grad_sq_integral, inner_raw, l2_sq_integral, GridDomain, ScalarField};
use crate::riesz::RieszPlan;

/// Magnitudes below this are treated as exact zeros by the power maps.
pub const POWER_ZERO_GUARD: f64 = 1e-300;

/// `|v|^p` with the zero guard.
#[inline]
pub fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if a < POWER_ZERO_GUARD {
        0.0
    } else {
        a.powf(p)
    }
}

/// `sign(v)|v|^p`.
#[inline]
pub fn signed_pow(v: f64, p: f64) -> f64 {
    abs_pow(v, p).copysign(v)
}

/// Problem data shared by every energy evaluation.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    pub domain: Arc<GridDomain>,
    pub constants: Arc<SharpConstants>,
    pub plan: Arc<RieszPlan>,
    pub lambda: f64,
}

impl EnergyContext {
    pub fn new(domain: &Arc<GridDomain>, mu: f64, lambda: f64) -> Result<Self> {
        let plan = Arc::new(RieszPlan::new(domain, mu)?);
        Self::from_plan(plan, lambda)
    }

    pub fn from_plan(plan: Arc<RieszPlan>, lambda: f64) -> Result<Self> {
        let domain = plan.domain().clone();
        let constants = SharpConstants::cached(domain.dim(), plan.mu())?;
        Ok(Self {
            domain,
            constants,
            plan,
            lambda,
        })
    }

    /// Same grid and kernel, another `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn mu(&self) -> f64 {
        self.constants.mu
    }

    /// The critical exponent `p = 2μ* = (2N-μ)/(N-2)`.
    pub fn exponent(&self) -> f64 {
        self.constants.upper_crit
    }

    fn check(&self, u: &ScalarField) -> Result<()> {
        if !self.domain.same_as(u.domain()) {
            return Err(Error::Dimension("field is not on the context's domain".into()));
        }
        Ok(())
    }

    fn power_field(&self, u: &ScalarField) -> Vec<f64> {
        let p = self.exponent();
        u.values().iter().map(|&v| abs_pow(v, p)).collect()
    }
}

/// The three terms of `J_λ` and derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `½∫|∇u|²`
    pub grad_term: f64,
    /// `D(u)/(2p)`
    pub nl_term: f64,
    /// `(λ/2)∫u²`
    pub l2_term: f64,
    pub total: f64,
    /// `Q_λ(u)`; `None` when `D(u) = 0`.
    pub quotient: Option<f64>,
    pub nl_norm: f64,
    pub lambda: f64,
    pub grad_sq: f64,
    pub l2_sq: f64,
    pub nl_double: f64,
}

impl EnergyBreakdown {
    fn assemble(ctx: &EnergyContext, grad_sq: f64, l2_sq: f64, nl_double: f64) -> Self {
        let p = ctx.exponent();
        let lambda = ctx.lambda;
        let grad_term = 0.5 * grad_sq;
        let nl_term = nl_double / (2.0 * p);
        let l2_term = 0.5 * lambda * l2_sq;
        let quotient = (nl_double > 0.0).then(|| (grad_sq - lambda * l2_sq) / nl_double.powf(1.0 / p));
        Self {
            grad_term,
            nl_term,
            l2_term,
            total: grad_term - nl_term - l2_term,
            quotient,
            nl_norm: nl_double.max(0.0).powf(1.0 / (2.0 * p)),
            lambda,
            grad_sq,
            l2_sq,
            nl_double,
        }
    }

    /// Numerator of the quotient, `∫|∇u|² − λ∫u²`.
    pub fn quadratic(&self) -> f64 {
        self.grad_sq - self.lambda * self.l2_sq
    }
}

/// `D(u) = ∬ |u(x)|^p |u(y)|^p |x-y|^{-μ}`.
pub fn nl_double(ctx: &EnergyContext, u: &ScalarField) -> Result<f64> {
    ctx.check(u)?;
    let f = ctx.power_field(u);
    let v = ctx.plan.apply_raw(&f);
    Ok(inner_raw(&ctx.domain, &f, &v))
}

/// `‖u‖_NL = D(u)^{1/(2p)}`, evaluated as `m ‖u/m‖_NL` with `m = max|u|` so
/// that scaling by `±2^k` commutes exactly.
pub fn nl_norm(ctx: &EnergyContext, u: &ScalarField) -> Result<f64> {
    ctx.check(u)?;
    let m = u.max_abs();
    if m == 0.0 {
        return Ok(0.0);
    }
    let d = nl_double(ctx, &u.scaled(1.0 / m))?;
    Ok(m * d.max(0.0).powf(1.0 / (2.0 * ctx.exponent())))
}

pub fn energy(ctx: &EnergyContext, u: &ScalarField) -> Result<EnergyBreakdown> {
    let d = nl_double(ctx, u)?;
    Ok(EnergyBreakdown::assemble(
        ctx,
        grad_sq_integral(u),
        l2_sq_integral(u),
        d,
    ))
}

/// `J_λ(u)` and the field `g` with `⟨g, φ⟩ = J'_λ(u)φ` for every grid `φ`,
/// sharing one Riesz evaluation.
pub fn energy_and_gradient(ctx: &EnergyContext, u: &ScalarField) -> Result<(EnergyBreakdown, ScalarField)> {
    ctx.check(u)?;
    let p = ctx.exponent();
    let f = ctx.power_field(u);
    let pot = ctx.plan.apply_raw(&f);
    let d = inner_raw(&ctx.domain, &f, &pot);
    let mut g = ctx.domain.laplacian(u.values());
    for &x in ctx.domain.masked_nodes() {
        let v = u.values()[x];
        g[x] -= ctx.lambda * v + pot[x] * signed_pow(v, p - 1.0);
    }
    let e = EnergyBreakdown::assemble(ctx, grad_sq_integral(u), l2_sq_integral(u), d);
    Ok((e, ScalarField::from_raw(&ctx.domain, g)))
}

/// `A u − λu − (|x|^{-μ} * |u|^p)|u|^{p-2}u`, the weak-form gradient.
pub fn energy_gradient(ctx: &EnergyContext, u: &ScalarField) -> Result<ScalarField> {
    energy_and_gradient(ctx, u).map(|(_, g)| g)
}

/// `Q_λ(u)`.
pub fn quotient(ctx: &EnergyContext, u: &ScalarField) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::Degenerate("quotient of the zero field".into()));
    }
    // evaluate on u/‖u‖_∞: the quotient is scale free and this keeps the
    // powers in range
    energy(ctx, &u.scaled(1.0 / u.max_abs()))?
        .quotient
        .ok_or_else(|| Error::Degenerate("nonlocal term vanishes".into()))
}

/// Maximum of `t ↦ J_λ(tu)` over `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayMax {
    pub t_star: f64,
    pub level: f64,
}

/// Closed form from the quadratic part `a` and the double integral `b`.
pub fn ray_max_from_parts(p: f64, a: f64, b: f64) -> Result<RayMax> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::RayUnbounded(if b > 0.0 { a / b.powf(1.0 / p) } else { f64::NAN }));
    }
    let t_star = (a / b).powf(1.0 / (2.0 * p - 2.0));
    let level = (p - 1.0) / (2.0 * p) * a * (a / b).powf(1.0 / (p - 1.0));
    Ok(RayMax { t_star, level })
}

pub fn ray_max(ctx: &EnergyContext, u: &ScalarField) -> Result<RayMax> {
    if u.is_zero() {
        return Err(Error::Degenerate("ray through the zero field".into()));
    }
    let e = energy(ctx, u)?;
    ray_max_from_parts(ctx.exponent(), e.quadratic(), e.nl_double)
}

/// Level of the ray maximum in terms of the quotient alone.
pub fn level_from_quotient(constants: &SharpConstants, q: f64) -> f64 {
    let n = constants.dim as f64;
    let mu = constants.mu;
    constants::threshold_coefficient(constants.dim, mu) * q.powf((2.0 * n - mu) / (n + 2.0 - mu))
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// `D(u)^{1/p} / (C(N,μ)^{1/p} |u|²_{2*})`; at most one in the continuum.
pub fn hls_check(ctx: &EnergyContext, u: &ScalarField) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::Degenerate("HLS ratio of the zero field".into()));
    }
    let c = &ctx.constants;
    let d = nl_double(ctx, u)?;
    let s = c.sobolev_exp;
    let lp: f64 = ctx.domain.cell_volume() * u.values().iter().map(|&v| abs_pow(v, s)).sum::<f64>();
    let rhs = c.hls_const.powf(1.0 / c.upper_crit) * lp.powf(2.0 / s);
    Ok(d.powf(1.0 / c.upper_crit) / rhs)
}

/// `|[D(u0 + w_n) − D(w_n)] − D(u0)|` for each `w_n`.
pub fn brezis_lieb_defect(ctx: &EnergyContext, u0: &ScalarField, ws: &[ScalarField]) -> Result<Vec<f64>> {
    let d0 = nl_double(ctx, u0)?;
    ws.iter()
        .map(|w| {
            let un = u0.add(w)?;
            let dn = nl_double(ctx, &un)?;
            let dw = nl_double(ctx, w)?;
            Ok(((dn - dw) - d0).abs())
        })
        .collect()
}
