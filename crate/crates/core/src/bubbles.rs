//! Truncated Talenti bubbles `u_ε = ψ U_ε`, `U_ε(x) = ε^{(2-N)/2} U(x/ε)`,
//! and the energy bookkeeping that shows the quotient dipping below `S_HL`.
//!
//! The cutoff is `ψ(r) = 1` for `r ≤ δ`, `0` for `r ≥ 2δ`, and the C¹ cubic
//! `1 - 3s² + 2s³` (`s = (r-δ)/δ`) in between.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{ExtremalProfile, Normalization, SharpConstants};
use crate::energy::abs_pow;
use crate::error::{self, Error, Result};
use crate::field::{grad_sq_integral, inner_raw, l2_sq_integral, GridDomain, ScalarField};
use crate::riesz::RieszPlan;

/// Smallest admissible `ε/h`.
pub const MIN_EPS_OVER_H: f64 = 2.0;

/// `ψ` as a function of the distance to the centre.
pub fn cutoff(r: f64, delta: f64) -> f64 {
    if r <= delta {
        1.0
    } else if r >= 2.0 * delta {
        0.0
    } else {
        let s = (r - delta) / delta;
        1.0 - 3.0 * s * s + 2.0 * s * s * s
    }
}

#[derive(Debug, Clone)]
pub struct BubbleSpec {
    pub domain: Arc<GridDomain>,
    pub epsilon: f64,
    pub delta: f64,
    pub center: Vec<f64>,
}

impl BubbleSpec {
    /// Bubble centred at the origin. `ε ≤ δ/2` is the intended regime; it is
    /// not enforced so that coarse grids can still be swept.
    pub fn new(domain: &Arc<GridDomain>, epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_center(domain, epsilon, delta, vec![0.0; domain.dim() as usize])
    }

    pub fn with_center(domain: &Arc<GridDomain>, epsilon: f64, delta: f64, center: Vec<f64>) -> Result<Self> {
        let h = domain.spacing();
        if center.len() != domain.dim() as usize {
            return Err(Error::Dimension("center has the wrong dimension".into()));
        }
        if !(delta > 0.0) || !(epsilon > 0.0) {
            return error::domain(format!("epsilon and delta must be positive, got {epsilon}, {delta}"));
        }
        if epsilon < MIN_EPS_OVER_H * h {
            return Err(Error::Resolution(format!(
                "epsilon {epsilon} is below {MIN_EPS_OVER_H}h = {}",
                MIN_EPS_OVER_H * h
            )));
        }
        let l = domain.half_width();
        if center.iter().any(|c| c.abs() + 2.0 * delta > l + 1e-12 * l) {
            return error::domain("the ball of radius 2δ leaves the box");
        }
        // B_δ must lie in Ω at grid resolution
        let mut x = vec![0.0; center.len()];
        for node in 0..domain.node_count() {
            domain.coords_into(node, &mut x);
            if dist(&x, &center) < delta && !domain.is_masked(node) {
                return error::domain("B_δ is not contained in the mask");
            }
        }
        Ok(Self {
            domain: domain.clone(),
            epsilon,
            delta,
            center,
        })
    }

    fn profile(&self) -> ExtremalProfile {
        ExtremalProfile::new(
            self.domain.dim(),
            1.0,
            Normalization::SobolevU,
            self.center.clone(),
            self.epsilon,
        )
        .expect("dimension checked by the domain")
    }

    /// `U_ε` on the mask, without the cutoff.
    pub fn uncut_field(&self) -> ScalarField {
        let p = self.profile();
        ScalarField::from_fn(&self.domain, |x| p.radial_value(dist(x, &self.center)))
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// `u_ε = ψ U_ε` on the mask.
pub fn make_bubble_field(spec: &BubbleSpec) -> ScalarField {
    let p = spec.profile();
    ScalarField::from_fn(&spec.domain, |x| {
        let r = dist(x, &spec.center);
        cutoff(r, spec.delta) * p.radial_value(r)
    })
}

/// `ψ φ` for a centred extremal `φ` of the given scale and normalization,
/// with the cutoff running from `δ` to `2δ`.
pub fn truncated_extremal(
    domain: &Arc<GridDomain>,
    mu: f64,
    normalization: Normalization,
    scale: f64,
    delta: f64,
) -> Result<ScalarField> {
    if !(delta > 0.0) {
        return error::domain(format!("delta must be positive, got {delta}"));
    }
    let centre = vec![0.0; domain.dim() as usize];
    let p = ExtremalProfile::new(domain.dim(), mu, normalization, centre.clone(), scale)?;
    Ok(ScalarField::from_fn(domain, |x| {
        let r = dist(x, &centre);
        cutoff(r, delta) * p.radial_value(r)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub grad_sq: f64,
    pub l2_sq: f64,
    /// `∬ |u_ε|^p |u_ε|^p |x-y|^{-μ}`
    pub nl_double: f64,
    /// `(grad_sq − λ l2_sq) / nl_double^{(N-2)/(2N-μ)}`
    pub a_epsilon: f64,
    /// Cross term between `Ω∖B_δ` and `B_δ` for the uncut `U_ε`.
    pub tail_d: f64,
    /// Self term of `Ω∖B_δ` for the uncut `U_ε`.
    pub tail_e: f64,
    /// `∫|u_ε|`
    pub l1: f64,
    /// Reference value `S_HL` for this `(N, μ)`.
    pub s_hl: f64,
}

impl BubbleReport {
    pub fn deficit(&self) -> f64 {
        self.s_hl - self.a_epsilon
    }

    /// `A_ε` at another `λ` (the other entries do not depend on it).
    pub fn a_at(&self, lambda: f64, p: f64) -> f64 {
        (self.grad_sq - lambda * self.l2_sq) / self.nl_double.powf(1.0 / p)
    }

    /// The `λ` at which `A_ε` crosses `S_HL`.
    pub fn crossing_lambda(&self, p: f64) -> f64 {
        (self.grad_sq - self.s_hl * self.nl_double.powf(1.0 / p)) / self.l2_sq
    }
}

/// All bubble quantities for one `ε` from two Riesz evaluations.
pub fn bubble_report(plan: &RieszPlan, spec: &BubbleSpec, lambda: f64) -> Result<BubbleReport> {
    if !plan.domain().same_as(&spec.domain) {
        return Err(Error::Dimension("bubble and plan live on different domains".into()));
    }
    let d = &spec.domain;
    let c = SharpConstants::cached(d.dim(), plan.mu())?;
    let p = c.upper_crit;
    let u = make_bubble_field(spec);
    let f: Vec<f64> = u.values().iter().map(|&v| abs_pow(v, p)).collect();

    let uncut = spec.uncut_field();
    let mut inner_part = vec![0.0; d.node_count()];
    let mut outer_part = vec![0.0; d.node_count()];
    let mut x = vec![0.0; d.dim() as usize];
    for &node in d.masked_nodes() {
        d.coords_into(node, &mut x);
        let v = abs_pow(uncut.values()[node], p);
        if dist(&x, &spec.center) < spec.delta {
            inner_part[node] = v;
        } else {
            outer_part[node] = v;
        }
    }
    let (k_inner, k_outer) = plan.apply_pair_raw(&inner_part, &outer_part);
    let tail_d = inner_raw(d, &outer_part, &k_inner);
    let tail_e = inner_raw(d, &outer_part, &k_outer);
    let nl_double = inner_raw(d, &f, &plan.apply_raw(&f));

    let grad_sq = grad_sq_integral(&u);
    let l2_sq = l2_sq_integral(&u);
    let l1 = d.cell_volume() * u.values().iter().map(|v| v.abs()).sum::<f64>();
    Ok(BubbleReport {
        epsilon: spec.epsilon,
        lambda,
        grad_sq,
        l2_sq,
        nl_double,
        a_epsilon: (grad_sq - lambda * l2_sq) / nl_double.powf(1.0 / p),
        tail_d,
        tail_e,
        l1,
        s_hl: c.nonlocal_s_hl,
    })
}

/// Reports for each `ε`, in the order given.
pub fn bubble_sweep(plan: &RieszPlan, delta: f64, eps: &[f64], lambda: f64) -> Result<Vec<BubbleReport>> {
    eps.iter()
        .map(|&e| {
            let spec = BubbleSpec::new(plan.domain(), e, delta)?;
            bubble_report(plan, &spec, lambda)
        })
        .collect()
}

/// `{δ/4 · 2^{-k}}` for `k = 0..count`, dropping values below `2h`.
pub fn default_eps_grid(delta: f64, h: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| delta / 4.0 * 0.5f64.powi(k as i32))
        .filter(|&e| e >= MIN_EPS_OVER_H * h)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope of `ln(deficit / ℓ(ε))` against `ln ε`, with `ℓ = |ln ε|` for
    /// `N = 4` and `ℓ = 1` otherwise.
    pub exponent: f64,
    /// Slope of `ln(deficit)` against `ln ε`.
    pub log_slope: f64,
    /// Goodness of fit of the first regression.
    pub r_squared: f64,
    /// Fitted prefactor `c` in `deficit ≈ c ε^exponent ℓ(ε)`.
    pub prefactor: f64,
}

/// Exponent the deficit `S_HL − A_ε` is expected to follow.
pub fn model_exponent(dim: u32) -> f64 {
    if dim == 3 {
        1.0
    } else {
        2.0
    }
}

/// `(slope, intercept, r²)` of an ordinary least squares line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Log-log fit of the deficit against the model for dimension `dim`.
pub fn deficit_rate_fit(reports: &[BubbleReport], dim: u32) -> Result<FitResult> {
    if reports.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 reports, got {}", reports.len())));
    }
    if reports.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
        return Err(Error::Fit("epsilon must be strictly decreasing".into()));
    }
    if reports.iter().any(|r| r.lambda != reports[0].lambda) {
        return Err(Error::Fit("reports mix different lambda".into()));
    }
    if let Some(r) = reports.iter().find(|r| !(r.deficit() > 0.0)) {
        return Err(Error::Fit(format!(
            "nonpositive deficit {} at epsilon {}",
            r.deficit(),
            r.epsilon
        )));
    }
    let x: Vec<f64> = reports.iter().map(|r| r.epsilon.ln()).collect();
    let raw: Vec<f64> = reports.iter().map(|r| r.deficit().ln()).collect();
    let y: Vec<f64> = reports
        .iter()
        .map(|r| {
            let l = if dim == 4 { r.epsilon.ln().abs() } else { 1.0 };
            (r.deficit() / l).ln()
        })
        .collect();
    let (exponent, intercept, r_squared) = linear_fit(&x, &y);
    let (log_slope, _, _) = linear_fit(&x, &raw);
    Ok(FitResult {
        exponent,
        log_slope,
        r_squared,
        prefactor: intercept.exp(),
    })
}

/// Smallest `λ` on the grid for which some `ε` gives `A_ε < S_HL` (`N = 3`).
pub fn lambda_star_estimate(plan: &RieszPlan, delta: f64, eps_grid: &[f64], lambda_grid: &[f64]) -> Result<f64> {
    let d = plan.domain();
    if d.dim() != 3 {
        return error::domain(format!("the threshold estimate is for N = 3, got {}", d.dim()));
    }
    if eps_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Config("empty epsilon or lambda grid".into()));
    }
    let p = SharpConstants::cached(3, plan.mu())?.upper_crit;
    let reports = bubble_sweep(plan, delta, eps_grid, 0.0)?;
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let qualifies = |lam: f64| reports.iter().any(|r| r.a_at(lam, p) < r.s_hl);
    let first = lambdas
        .iter()
        .position(|&l| qualifies(l))
        .ok_or_else(|| Error::NotFound("no grid lambda brings A_eps below S_HL".into()))?;
    if !lambdas[first..].iter().all(|&l| qualifies(l)) {
        return Err(Error::Convergence(
            "qualifying lambdas do not form an up-set".into(),
        ));
    }
    Ok(lambdas[first])
}

/// Continuous version of [`lambda_star_estimate`]: `min_ε` of the crossing `λ`.
pub fn lambda_star_continuous(reports: &[BubbleReport], p: f64) -> f64 {
    reports
        .iter()
        .map(|r| r.crossing_lambda(p))
        .fold(f64::INFINITY, f64::min)
}
