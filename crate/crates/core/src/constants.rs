//! Sharp constants and exponents of the critical Choquard problem.
//!
//! Everything here is a closed-form evaluation backed by a double precision
//! Lanczos Γ and, where an improper radial integral is involved, a Gauss
//! quadrature on the compactified half line `r = tan θ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Number of Gauss-Legendre nodes used by [`radial_integral`].
pub const RADIAL_NODES: usize = 512;

/// Agreement required between the closed form and the quadrature route for `S`.
pub const SOBOLEV_ROUTE_TOL: f64 = 1e-6;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for real `x` away from the poles, Lanczos approximation (g = 7, 9 terms).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Surface area of the unit sphere in `R^dim`.
pub fn sphere_area(dim: u32) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Volume of the unit ball in `R^dim`.
pub fn ball_volume(dim: u32) -> f64 {
    let n = dim as f64;
    PI.powf(n / 2.0) / gamma(n / 2.0 + 1.0)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn radial_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        // map [-1, 1] onto θ ∈ [0, π/2), then r = tan θ
        let (x, w) = gauss_legendre(RADIAL_NODES);
        let half = PI / 4.0;
        let r = x.iter().map(|&t| (half * (t + 1.0)).tan()).collect();
        let wr = x
            .iter()
            .zip(&w)
            .map(|(&t, &wt)| {
                let c = (half * (t + 1.0)).cos();
                wt * half / (c * c)
            })
            .collect();
        (r, wr)
    })
}

/// `∫_{R^dim} g(|x|) dx` for a radial integrand with polynomial decay.
pub fn radial_integral(dim: u32, g: impl Fn(f64) -> f64) -> f64 {
    let (r, w) = radial_rule();
    let s: f64 = r
        .iter()
        .zip(w)
        .map(|(&r, &w)| w * g(r) * r.powi(dim as i32 - 1))
        .sum();
    sphere_area(dim) * s
}

fn check_dim(dim: u32) -> Result<()> {
    if dim < 3 {
        return domain(format!("dimension must be at least 3, got {dim}"));
    }
    Ok(())
}

fn check_dim_mu(dim: u32, mu: f64) -> Result<()> {
    check_dim(dim)?;
    if !(mu > 0.0 && mu < dim as f64) {
        return domain(format!("mu must lie in (0, {dim}), got {mu}"));
    }
    Ok(())
}

/// Sharp Hardy-Littlewood-Sobolev constant `C(N, μ)` for the conjugate exponents
/// `t = r = 2N/(2N-μ)`.
pub fn hls_sharp_constant(dim: u32, mu: f64) -> Result<f64> {
    check_dim_mu(dim, mu)?;
    let n = dim as f64;
    let ratio = gamma(n / 2.0) / gamma(n);
    Ok(PI.powf(mu / 2.0) * gamma(n / 2.0 - mu / 2.0) / gamma(n - mu / 2.0)
        * ratio.powf(-1.0 + mu / n))
}

/// Closed form `πN(N-2)(Γ(N/2)/Γ(N))^{2/N}` of the best Sobolev constant.
pub fn sobolev_closed_form(dim: u32) -> Result<f64> {
    check_dim(dim)?;
    let n = dim as f64;
    Ok(PI * n * (n - 2.0) * (gamma(n / 2.0) / gamma(n)).powf(2.0 / n))
}

/// `(∫|∇U|²)^{2/N}` for the explicit Sobolev minimizer, by radial quadrature.
pub fn sobolev_by_quadrature(dim: u32) -> Result<f64> {
    check_dim(dim)?;
    let profile = ExtremalProfile::centered(dim, 1.0, Normalization::SobolevU, 1.0);
    Ok(profile.grad_sq_quadrature().powf(2.0 / dim as f64))
}

/// Best Sobolev constant `S`, cross-checked between two independent routes.
pub fn best_sobolev_constant(dim: u32) -> Result<f64> {
    let closed = sobolev_closed_form(dim)?;
    let quad = sobolev_by_quadrature(dim)?;
    let rel = (closed - quad).abs() / closed;
    if rel > SOBOLEV_ROUTE_TOL {
        return Err(Error::Convergence(format!(
            "closed form S = {closed} and quadrature S = {quad} differ by {rel:e}"
        )));
    }
    Ok(closed)
}

/// `S_{H,L} = S / C(N, μ)^{(N-2)/(2N-μ)}`.
pub fn best_nonlocal_constant(dim: u32, mu: f64) -> Result<f64> {
    let c = hls_sharp_constant(dim, mu)?;
    let s = best_sobolev_constant(dim)?;
    let n = dim as f64;
    Ok(s / c.powf((n - 2.0) / (2.0 * n - mu)))
}

/// `∫|∇Ũ|² = ∬|Ũ|^{2μ*}|Ũ|^{2μ*}/|x-y|^μ = S_{H,L}^{(2N-μ)/(N-μ+2)}`.
pub fn extremal_energy(dim: u32, mu: f64) -> Result<f64> {
    let n = dim as f64;
    Ok(best_nonlocal_constant(dim, mu)?.powf((2.0 * n - mu) / (n - mu + 2.0)))
}

/// Compactness threshold `(N+2-μ)/(4N-2μ) · S_{H,L}^{(2N-μ)/(N+2-μ)}`.
pub fn threshold_level(dim: u32, mu: f64) -> Result<f64> {
    let n = dim as f64;
    let s_hl = best_nonlocal_constant(dim, mu)?;
    Ok(threshold_coefficient(dim, mu) * s_hl.powf((2.0 * n - mu) / (n + 2.0 - mu)))
}

/// `(N+2-μ)/(4N-2μ)`, the prefactor relating quotient values to ray maxima.
pub fn threshold_coefficient(dim: u32, mu: f64) -> f64 {
    let n = dim as f64;
    (n + 2.0 - mu) / (4.0 * n - 2.0 * mu)
}

/// Upper critical exponent `2μ* = (2N-μ)/(N-2)`.
pub fn upper_critical(dim: u32, mu: f64) -> f64 {
    let n = dim as f64;
    (2.0 * n - mu) / (n - 2.0)
}

/// Every constant and exponent of the problem for one `(N, μ)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpConstants {
    pub dim: u32,
    pub mu: f64,
    pub sobolev_exp: f64,
    pub upper_crit: f64,
    pub lower_crit: f64,
    pub hls_const: f64,
    #[serde(rename = "sobolev_S")]
    pub sobolev_s: f64,
    #[serde(rename = "nonlocal_S_HL")]
    pub nonlocal_s_hl: f64,
    pub ps_threshold: f64,
}

impl SharpConstants {
    /// Evaluate the bundle from scratch. Prefer [`SharpConstants::cached`].
    pub fn compute(dim: u32, mu: f64) -> Result<Self> {
        check_dim_mu(dim, mu)?;
        let n = dim as f64;
        let hls_const = hls_sharp_constant(dim, mu)?;
        let sobolev_s = best_sobolev_constant(dim)?;
        let nonlocal_s_hl = sobolev_s / hls_const.powf((n - 2.0) / (2.0 * n - mu));
        let ps_threshold =
            threshold_coefficient(dim, mu) * nonlocal_s_hl.powf((2.0 * n - mu) / (n + 2.0 - mu));
        Ok(Self {
            dim,
            mu,
            sobolev_exp: 2.0 * n / (n - 2.0),
            upper_crit: upper_critical(dim, mu),
            lower_crit: (2.0 * n - mu) / n,
            hls_const,
            sobolev_s,
            nonlocal_s_hl,
            ps_threshold,
        })
    }

    /// Shared, immutable bundle for `(dim, mu)`; computed once per process.
    pub fn cached(dim: u32, mu: f64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<(u32, u64), Arc<SharpConstants>>>> = OnceLock::new();
        let key = (dim, mu.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(Self::compute(dim, mu)?);
        cache.lock().unwrap().insert(key, c.clone());
        Ok(c)
    }

    /// `S_{H,L}^{(2N-μ)/(N-μ+2)}`, the common value of the gradient energy and the
    /// double integral of the nonlocal extremal.
    pub fn extremal_energy(&self) -> f64 {
        let n = self.dim as f64;
        self.nonlocal_s_hl
            .powf((2.0 * n - self.mu) / (n - self.mu + 2.0))
    }

    /// Multiplier taking `U` to the nonlocal minimizer `Ũ`.
    pub fn tilde_prefactor(&self) -> f64 {
        let n = self.dim as f64;
        let mu = self.mu;
        self.sobolev_s
            .powf((n - mu) * (2.0 - n) / (4.0 * (n - mu + 2.0)))
            * self.hls_const.powf((2.0 - n) / (2.0 * (n - mu + 2.0)))
    }
}

/// Which member of the extremal family a profile evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `U`, the Sobolev minimizer normalized so that `-ΔU = U^{2*-1}`.
    SobolevU,
    /// `Ũ`, the minimizer of the nonlocal quotient solving the Choquard equation on `R^N`.
    NonlocalTildeU,
}

/// The family `[N(N-2)]^{(N-2)/4} (b/(b²+|x-a|²))^{(N-2)/2}`, optionally rescaled to `Ũ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalProfile {
    pub center: Vec<f64>,
    pub scale: f64,
    pub normalization: Normalization,
    pub dim: u32,
    pub mu: f64,
    amplitude: f64,
}

impl ExtremalProfile {
    pub fn new(
        dim: u32,
        mu: f64,
        normalization: Normalization,
        center: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        check_dim(dim)?;
        if center.len() != dim as usize {
            return Err(Error::Dimension(format!(
                "center has {} coordinates, expected {dim}",
                center.len()
            )));
        }
        if !(scale > 0.0) {
            return domain(format!("scale must be positive, got {scale}"));
        }
        let n = dim as f64;
        let mut amplitude = (n * (n - 2.0)).powf((n - 2.0) / 4.0);
        if normalization == Normalization::NonlocalTildeU {
            amplitude *= SharpConstants::cached(dim, mu)?.tilde_prefactor();
        }
        Ok(Self {
            center,
            scale,
            normalization,
            dim,
            mu,
            amplitude,
        })
    }

    /// Profile centered at the origin. Panics on invalid `(dim, mu)`.
    pub fn centered(dim: u32, mu: f64, normalization: Normalization, scale: f64) -> Self {
        Self::new(dim, mu, normalization, vec![0.0; dim as usize], scale)
            .expect("valid extremal profile parameters")
    }

    pub fn radial_value(&self, r: f64) -> f64 {
        let b = self.scale;
        let n = self.dim as f64;
        self.amplitude * (b / (b * b + r * r)).powf((n - 2.0) / 2.0)
    }

    /// `d/dr` of [`Self::radial_value`].
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let b = self.scale;
        let n = self.dim as f64;
        let q = b / (b * b + r * r);
        -self.amplitude * (n - 2.0) * r * q.powf(n / 2.0) / b
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        self.radial_value(r2.sqrt())
    }

    /// `∫_{R^N} |∇φ|²` by radial quadrature.
    pub fn grad_sq_quadrature(&self) -> f64 {
        radial_integral(self.dim, |r| self.radial_derivative(r).powi(2))
    }
}

/// Value of an extremal profile at a point.
pub fn extremal_value(profile: &ExtremalProfile, x: &[f64]) -> f64 {
    profile.value(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    // Γ values frozen from a 40-digit mpmath evaluation.
    const GAMMA_ORACLE: [(f64, f64); 13] = [
        (0.1, 9.513507698668731836292487),
        (0.25, 3.625609908221908311930685),
        (0.5, 1.772453850905516027298167),
        (0.75, 1.225416702465177645129098),
        (1.0, 1.0),
        (1.5, 0.8862269254527580136490837),
        (2.0, 1.0),
        (2.5, 1.329340388179137020473626),
        (3.0, 2.0),
        (3.5, 3.323350970447842551184064),
        (4.0, 6.0),
        (4.5, 11.63172839656744892914422),
        (5.0, 24.0),
    ];

    #[test]
    fn lanczos_gamma_matches_oracle() {
        for (x, g) in GAMMA_ORACLE {
            assert!(rel(gamma(x), g) < 1e-13, "Γ({x}) = {} vs {g}", gamma(x));
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(RADIAL_NODES);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hls_constant_examples() {
        assert!(matches!(hls_sharp_constant(3, 3.0), Err(Error::Domain(_))));
        assert!(matches!(hls_sharp_constant(3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(hls_sharp_constant(2, 1.0), Err(Error::Domain(_))));
        // 40-digit mpmath evaluation of the Γ formula
        assert!(rel(hls_sharp_constant(3, 1.0).unwrap(), 2.2940107035415990009) < 1e-12);
        let c42 = hls_sharp_constant(4, 2.0).unwrap();
        assert!(rel(c42, PI * 6f64.sqrt() / 2.0) < 1e-12);
        assert!(rel(c42, 3.8476494904855922866) < 1e-12);
    }

    #[test]
    fn sobolev_constant_examples() {
        assert!(rel(best_sobolev_constant(3).unwrap(), 5.4779040895313318736) < 1e-12);
        assert!(rel(best_sobolev_constant(4).unwrap(), 10.260398641294912764) < 1e-12);
        assert!(matches!(best_sobolev_constant(2), Err(Error::Domain(_))));
        for n in 3..=7 {
            let a = sobolev_closed_form(n).unwrap();
            let b = sobolev_by_quadrature(n).unwrap();
            assert!(rel(a, b) < 1e-10, "N={n}: {a} vs {b}");
        }
    }

    #[test]
    fn nonlocal_constant_and_threshold_examples() {
        assert!(rel(best_nonlocal_constant(3, 1.0).unwrap(), 4.6397580731475459921) < 1e-12);
        assert!(rel(best_nonlocal_constant(4, 2.0).unwrap(), 6.5478552041828740865) < 1e-12);
        assert!(rel(threshold_level(3, 1.0).unwrap(), 2.7238247480468172821) < 1e-12);
        assert!(rel(threshold_level(4, 2.0).unwrap(), 5.5850536063818546462) < 1e-12);
        assert_eq!(threshold_coefficient(3, 1.0), 0.4);
        // with C(N,μ) replaced by 1 the quotient is S itself
        let s = best_sobolev_constant(5).unwrap();
        let n = 5.0;
        let mu = 1.5;
        assert_eq!(s / 1f64.powf((n - 2.0) / (2.0 * n - mu)), s);
    }

    #[test]
    fn bundle_invariants() {
        for &(n, mu) in &[(3, 1.0), (3, 2.0), (4, 2.0), (5, 4.0), (4, 0.3), (5, 4.9)] {
            let c = SharpConstants::compute(n, mu).unwrap();
            let nf = n as f64;
            assert!(c.lower_crit < c.upper_crit && c.upper_crit < c.sobolev_exp);
            let shl = c.sobolev_s / c.hls_const.powf((nf - 2.0) / (2.0 * nf - mu));
            assert!(rel(c.nonlocal_s_hl, shl) < 1e-12);
            let th = (nf + 2.0 - mu) / (4.0 * nf - 2.0 * mu)
                * c.nonlocal_s_hl.powf((2.0 * nf - mu) / (nf + 2.0 - mu));
            assert!(rel(c.ps_threshold, th) < 1e-12);
            assert!(c.ps_threshold > 0.0);
        }
    }

    #[test]
    fn upper_exponent_decreases_in_mu() {
        for n in 3..=5u32 {
            let mut prev = f64::INFINITY;
            for k in 1..50 {
                let mu = n as f64 * k as f64 / 50.0;
                let e = upper_critical(n, mu);
                assert!(e < prev);
                prev = e;
            }
        }
    }

    #[test]
    fn cached_bundle_is_shared() {
        let a = SharpConstants::cached(3, 1.0).unwrap();
        let b = SharpConstants::cached(3, 1.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn extremal_profile_values() {
        let u = ExtremalProfile::centered(3, 1.0, Normalization::SobolevU, 1.0);
        assert!(rel(extremal_value(&u, &[0.0; 3]), 3f64.powf(0.25)) < 1e-15);
        let v = extremal_value(&u, &[1.0, 0.0, 0.0]);
        assert!(rel(v, 3f64.powf(0.25) / 2f64.sqrt()) < 1e-15);
        // radially symmetric and strictly decreasing
        let a = ExtremalProfile::new(3, 1.0, Normalization::SobolevU, vec![0.5, -1.0, 2.0], 0.7)
            .unwrap();
        assert!(rel(a.value(&[1.5, -1.0, 2.0]), a.value(&[0.5, 0.0, 2.0])) < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let v = a.radial_value(k as f64 * 0.1);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn tilde_gradient_energy_matches_extremal_identity() {
        for &(n, mu) in &[(3, 1.0), (3, 2.0), (4, 2.0), (5, 4.0)] {
            let p = ExtremalProfile::centered(n, mu, Normalization::NonlocalTildeU, 1.0);
            let e = SharpConstants::cached(n, mu).unwrap().extremal_energy();
            assert!(rel(p.grad_sq_quadrature(), e) < 1e-6);
            // scale invariance of the Dirichlet energy in the family
            let q = ExtremalProfile::centered(n, mu, Normalization::NonlocalTildeU, 0.3);
            assert!(rel(q.grad_sq_quadrature(), e) < 1e-6);
        }
    }

    #[test]
    fn radial_derivative_matches_finite_difference() {
        let p = ExtremalProfile::centered(4, 2.0, Normalization::SobolevU, 0.8);
        for &r in &[0.1, 0.5, 1.3, 4.0] {
            let s = 1e-6;
            let fd = (p.radial_value(r + s) - p.radial_value(r - s)) / (2.0 * s);
            assert!((fd - p.radial_derivative(r)).abs() < 1e-8);
        }
    }
}
