//! Minimax levels and critical points of `J_λ`.
//!
//! All descents use the `H¹₀` (Sobolev) gradient: the weak-form gradient is
//! mapped through one Dirichlet Poisson solve, which removes the `h⁻²`
//! stiffness of the raw grid gradient. The same solve yields the dual norm
//! used as the stationarity residual,
//!
//! ```text
//! r(u) = ‖Au − λu − (a/D) V|u|^{p-2}u‖_{H⁻¹} / ‖u‖_{H¹₀},
//! ```
//!
//! where `a = ∫|∇u|² − λ∫u²` and `D` is the double integral. `r` is scale
//! free and equals `‖J'(t*u)‖/‖t*u‖` whenever the ray maximum `t*` exists.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::bubbles::{make_bubble_field, BubbleSpec};
use crate::energy::{level_from_quotient, quotient, signed_pow, abs_pow, EnergyContext};
use crate::field::{boundary_weighted_grad_sq, grad_inner, inner, inner_raw, l2_sq_integral, GridDomain, ScalarField};
use crate::parallel::map_indexed;
use crate::poisson::PoissonSolver;
use crate::spectral::EigenBasis;
use crate::{energy, Error, Result};

/// Default stationarity tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Step halvings allowed before a line search gives up.
pub const MAX_HALVINGS: usize = 30;
/// A run collapses once `‖u‖_NL` falls below this fraction of its start.
pub const COLLAPSE_TOL: f64 = 1e-8;
/// A run concentrates once 90% of `∫|∇u|²` sits within this many `h`.
pub const CONCENTRATION_CELLS: f64 = 3.0;
/// Random starts used by the linking maximization.
pub const LINKING_STARTS: usize = 32;
/// Largest Gram condition number accepted for a spanning set.
pub const GRAM_CONDITION_LIMIT: f64 = 1e10;
/// Coefficient-space ascent stops once `|∇Q| ≤ ASCENT_TOL·max(|Q|, 1)`.
pub const ASCENT_TOL: f64 = 1e-8;
const ASCENT_ITERS: usize = 100;
/// Pohozaev defect below which a run counts as a genuine solution.
pub const POHOZAEV_DEFECT_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConvergedNontrivial,
    CollapsedTrivial,
    Concentrating,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// First trial step of the line search.
    pub initial_step: f64,
    /// Rescale each iterate to its ray maximum (critical-point search only).
    pub nehari: bool,
    /// Known `λ_1`; if `λ ≥ λ_1` the report carries a warning.
    pub lambda_1: Option<f64>,
    /// Workers for multistart drivers.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: 500,
            initial_step: 0.5,
            nehari: true,
            lambda_1: None,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub iterations: usize,
    pub final_quotient: f64,
    /// Ray-maximum level of the final quotient, absent when `Q ≤ 0`.
    pub mp_level: Option<f64>,
    pub gradient_residual: f64,
    pub nl_norm_final: f64,
    pub concentration_radius: f64,
    pub verdict: Verdict,
    /// Objective after each accepted step (quotient, Nehari level or `J`).
    pub trace: Vec<f64>,
    /// `⟨J'(u), u⟩ / ‖u‖²_{H¹₀}` at the final field.
    pub nehari_defect: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub field: Option<ScalarField>,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// `D = 1`, objective `Q`.
    Sphere,
    /// `u = t*u`, objective `J(t*u)`.
    Nehari,
    /// unconstrained, objective `J`.
    Plain,
}

/// A field together with everything one Riesz evaluation tells about it.
struct State {
    u: Vec<f64>,
    au: Vec<f64>,
    pot: Vec<f64>,
    grad_sq: f64,
    l2_sq: f64,
    d: f64,
}

impl State {
    fn new(ctx: &EnergyContext, u: Vec<f64>) -> Self {
        let dom = &ctx.domain;
        let p = ctx.exponent();
        let f: Vec<f64> = u.iter().map(|&v| abs_pow(v, p)).collect();
        let pot = ctx.plan.apply_raw(&f);
        let d = inner_raw(dom, &f, &pot);
        let au = dom.laplacian(&u);
        let grad_sq = inner_raw(dom, &u, &au);
        let l2_sq = inner_raw(dom, &u, &u);
        Self {
            u,
            au,
            pot,
            grad_sq,
            l2_sq,
            d,
        }
    }

    fn scale(&mut self, t: f64, p: f64) {
        let tp = t.powf(p);
        self.u.iter_mut().for_each(|v| *v *= t);
        self.au.iter_mut().for_each(|v| *v *= t);
        self.pot.iter_mut().for_each(|v| *v *= tp);
        self.grad_sq *= t * t;
        self.l2_sq *= t * t;
        self.d *= tp * tp;
    }

    fn quadratic(&self, lambda: f64) -> f64 {
        self.grad_sq - lambda * self.l2_sq
    }

    fn quotient(&self, lambda: f64, p: f64) -> f64 {
        self.quadratic(lambda) / self.d.powf(1.0 / p)
    }

    fn nl_norm(&self, p: f64) -> f64 {
        self.d.max(0.0).powf(1.0 / (2.0 * p))
    }

    fn energy(&self, lambda: f64, p: f64) -> f64 {
        0.5 * self.quadratic(lambda) - self.d / (2.0 * p)
    }

    /// `Au − λu − c V|u|^{p-2}u` on the mask.
    fn weak_gradient(&self, ctx: &EnergyContext, c: f64) -> Vec<f64> {
        let p = ctx.exponent();
        let mut g = vec![0.0; self.u.len()];
        for &x in ctx.domain.masked_nodes() {
            let v = self.u[x];
            g[x] = self.au[x] - ctx.lambda * v - c * self.pot[x] * signed_pow(v, p - 1.0);
        }
        g
    }
}

struct Engine<'a> {
    ctx: &'a EnergyContext,
    poisson: PoissonSolver,
    p: f64,
}

impl<'a> Engine<'a> {
    fn new(ctx: &'a EnergyContext) -> Self {
        Self {
            ctx,
            poisson: PoissonSolver::new(&ctx.domain),
            p: ctx.exponent(),
        }
    }

    /// Put `s` on the constraint set of `mode`.
    fn normalize(&self, s: &mut State, mode: Mode) -> Result<()> {
        match mode {
            Mode::Sphere => s.scale(1.0 / s.nl_norm(self.p), self.p),
            Mode::Nehari => {
                let r = energy::ray_max_from_parts(self.p, s.quadratic(self.ctx.lambda), s.d)?;
                s.scale(r.t_star, self.p);
            }
            Mode::Plain => {}
        }
        Ok(())
    }

    fn objective(&self, s: &State, mode: Mode) -> f64 {
        let lambda = self.ctx.lambda;
        match mode {
            Mode::Sphere => s.quotient(lambda, self.p),
            Mode::Nehari | Mode::Plain => s.energy(lambda, self.p),
        }
    }

    /// Coefficient of the nonlocal term in the descent direction.
    fn coupling(&self, s: &State, mode: Mode) -> f64 {
        match mode {
            Mode::Plain => 1.0,
            _ => s.quadratic(self.ctx.lambda) / s.d,
        }
    }

    /// Sobolev direction and the relative dual-norm residual.
    fn direction(&self, s: &State, mode: Mode) -> Result<(Vec<f64>, f64)> {
        let g = self.weak_gradient(s, mode);
        let dir = self.poisson.solve(&g)?;
        let dual = inner_raw(&self.ctx.domain, &g, &dir).max(0.0).sqrt();
        Ok((dir, dual / s.grad_sq.sqrt()))
    }

    fn weak_gradient(&self, s: &State, mode: Mode) -> Vec<f64> {
        s.weak_gradient(self.ctx, self.coupling(s, mode))
    }

    fn run(&self, init: &ScalarField, opts: &SolveOptions, mode: Mode) -> Result<SolveReport> {
        let ctx = self.ctx;
        if !ctx.domain.same_as(init.domain()) {
            return Err(Error::Dimension("initial field is not on the context's domain".into()));
        }
        if init.is_zero() {
            return Err(Error::Degenerate("descent from the zero field".into()));
        }
        let mut warnings = Vec::new();
        if let Some(l1) = opts.lambda_1 {
            if ctx.lambda >= l1 {
                warnings.push(format!(
                    "lambda {} is not below lambda_1 {l1}; the level is not a mountain pass",
                    ctx.lambda
                ));
            }
        }
        let h = ctx.domain.spacing();
        let mut state = State::new(ctx, init.values().to_vec());
        if !(state.d > 0.0) {
            return Err(Error::Degenerate("initial field has no nonlocal mass".into()));
        }
        if mode == Mode::Sphere {
            // bring the sup norm to one first so the powers stay in range
            let m = init.max_abs();
            state.scale(1.0 / m, self.p);
        }
        self.normalize(&mut state, mode)?;
        let nl0 = state.nl_norm(self.p);
        let mut obj = self.objective(&state, mode);
        let mut trace = vec![obj];
        let mut step = opts.initial_step;
        let mut iterations = 0;
        let (verdict, residual) = loop {
            let (dir, residual) = self.direction(&state, mode)?;
            let nl = state.nl_norm(self.p);
            if nl < COLLAPSE_TOL * nl0 {
                break (Verdict::CollapsedTrivial, residual);
            }
            if residual < opts.tol {
                break (Verdict::ConvergedNontrivial, residual);
            }
            if concentration_radius_raw(&ctx.domain, &state.u) < CONCENTRATION_CELLS * h {
                break (Verdict::Concentrating, residual);
            }
            if iterations >= opts.max_iters {
                break (Verdict::BudgetExhausted, residual);
            }
            if mode == Mode::Plain && nl > 1e8 * nl0 {
                warnings.push("iterates grow without bound".into());
                break (Verdict::BudgetExhausted, residual);
            }
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand: Vec<f64> = state.u.iter().zip(&dir).map(|(u, s)| u - step * s).collect();
                let mut next = State::new(ctx, cand);
                if next.d > 0.0 {
                    self.normalize(&mut next, mode)?;
                    let o = self.objective(&next, mode);
                    if o < obj {
                        accepted = Some((next, o));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((next, o)) => {
                    state = next;
                    obj = o;
                    trace.push(o);
                    step *= 2.0;
                    iterations += 1;
                }
                None => {
                    warnings.push("line search stalled".into());
                    break (Verdict::BudgetExhausted, residual);
                }
            }
        };
        let lambda = ctx.lambda;
        let q = if state.d > 0.0 { state.quotient(lambda, self.p) } else { f64::NAN };
        let g_plain = state.weak_gradient(ctx, 1.0);
        let nehari_defect = if state.grad_sq > 0.0 {
            inner_raw(&ctx.domain, &g_plain, &state.u) / state.grad_sq
        } else {
            0.0
        };
        let field = ScalarField::from_values(&ctx.domain, state.u)?;
        Ok(SolveReport {
            lambda,
            iterations,
            final_quotient: q,
            mp_level: (q > 0.0).then(|| level_from_quotient(&ctx.constants, q)),
            gradient_residual: residual,
            nl_norm_final: state.d.max(0.0).powf(1.0 / (2.0 * self.p)),
            concentration_radius: concentration_radius(&field),
            verdict,
            trace,
            nehari_defect,
            warnings,
            field: Some(field),
        })
    }
}

/// Projected descent of `Q_λ` on the sphere `D(u) = 1`.
///
/// The trace holds `Q` after every accepted step and is nonincreasing.
pub fn minimize_quotient(ctx: &EnergyContext, init: &ScalarField, opts: &SolveOptions) -> Result<SolveReport> {
    Engine::new(ctx).run(init, opts, Mode::Sphere)
}

/// Search for `J'_λ(u) = 0`.
///
/// With `opts.nehari` every iterate sits at its ray maximum and the trace is
/// the mountain-pass level along the way; otherwise this is plain descent of
/// `J_λ`, which is the right tool for watching small data collapse to zero.
pub fn find_critical_point(ctx: &EnergyContext, init: &ScalarField, opts: &SolveOptions) -> Result<SolveReport> {
    let mode = if opts.nehari { Mode::Nehari } else { Mode::Plain };
    Engine::new(ctx).run(init, opts, mode)
}

/// Stationarity residual `r(u)` described in the module docs.
pub fn gradient_residual(ctx: &EnergyContext, u: &ScalarField) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::Degenerate("residual of the zero field".into()));
    }
    let e = Engine::new(ctx);
    let s = State::new(ctx, u.values().to_vec());
    e.direction(&s, Mode::Sphere).map(|(_, r)| r)
}

fn concentration_radius_raw(d: &GridDomain, u: &[f64]) -> f64 {
    let h = d.spacing();
    let dim = d.dim() as usize;
    let Some(peak) = d
        .masked_nodes()
        .iter()
        .copied()
        .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
    else {
        return 0.0;
    };
    let c = d.coords(peak);
    let mut x = vec![0.0; dim];
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(d.masked_count() * dim);
    let mut total = 0.0;
    let mut push = |x: &[f64], axis: usize, shift: f64, w: f64| {
        if w > 0.0 {
            let r2: f64 = (0..dim)
                .map(|k| {
                    let xk = if k == axis { x[k] + shift } else { x[k] };
                    (xk - c[k]).powi(2)
                })
                .sum();
            pairs.push((r2.sqrt(), w));
            total += w;
        }
    };
    for &node in d.masked_nodes() {
        d.coords_into(node, &mut x);
        for (axis, &st) in d.strides().iter().enumerate() {
            push(&x, axis, 0.5 * h, (u[node + st] - u[node]).powi(2));
            if !d.is_masked(node - st) {
                push(&x, axis, -0.5 * h, (u[node] - u[node - st]).powi(2));
            }
        }
    }
    if total == 0.0 {
        return 0.0;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (r, w) in pairs {
        acc += w;
        if acc >= 0.9 * total {
            return r;
        }
    }
    f64::INFINITY
}

/// Radius around the peak of `|u|` that holds 90% of `∫|∇u|²`, measured to
/// edge midpoints.
pub fn concentration_radius(u: &ScalarField) -> f64 {
    concentration_radius_raw(u.domain(), u.values())
}

/// Maximum of `Q_λ` over a finite-dimensional span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanMax {
    pub value: f64,
    /// Maximizer in terms of the spanning vectors as given.
    pub coefficients: Vec<f64>,
    /// Condition number of the `L²` Gram matrix.
    pub condition: f64,
}

/// `max Q_λ` over `span(vectors)` by sphere-constrained ascent in the
/// coefficients from every coordinate direction plus `starts` random ones.
pub fn span_maximum(ctx: &EnergyContext, vectors: &[ScalarField], starts: usize, seed: u64) -> Result<SpanMax> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::Degenerate("empty span".into()));
    }
    // unit L² vectors first, so power-of-two rescalings of the input are exact
    let mut norms = Vec::with_capacity(k);
    let mut unit = Vec::with_capacity(k);
    for v in vectors {
        let n = l2_sq_integral(v).sqrt();
        if n == 0.0 {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        norms.push(n);
        unit.push(v.scaled(1.0 / n));
    }
    let vectors = &unit[..];
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let g = inner(&vectors[i], &vectors[j])?;
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= GRAM_CONDITION_LIMIT) {
        return Err(Error::IllConditioned(condition));
    }
    // L²-orthonormal basis ψ_m = Σ_i V_im v_i / √Λ_m
    let to_orig = DMatrix::from_fn(k, k, |i, m| eig.eigenvectors[(i, m)] / eig.eigenvalues[m].sqrt());
    let dom = &ctx.domain;
    let psi: Vec<Vec<f64>> = (0..k)
        .map(|m| {
            let mut w = vec![0.0; dom.node_count()];
            for (i, v) in vectors.iter().enumerate() {
                let c = to_orig[(i, m)];
                for (a, b) in w.iter_mut().zip(v.values()) {
                    *a += c * b;
                }
            }
            w
        })
        .collect();
    let psi_fields: Vec<ScalarField> = psi
        .iter()
        .map(|w| ScalarField::from_values(dom, w.clone()))
        .collect::<Result<_>>()?;
    let mut quad = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let q = grad_inner(&psi_fields[i], &psi_fields[j])? - ctx.lambda * inner(&psi_fields[i], &psi_fields[j])?;
            quad[(i, j)] = q;
            quad[(j, i)] = q;
        }
    }
    let p = ctx.exponent();
    let eval = |c: &DVector<f64>| -> (f64, DVector<f64>) {
        let mut v = vec![0.0; dom.node_count()];
        for (m, w) in psi.iter().enumerate() {
            for (a, b) in v.iter_mut().zip(w) {
                *a += c[m] * b;
            }
        }
        let f: Vec<f64> = v.iter().map(|&x| abs_pow(x, p)).collect();
        let pot = ctx.plan.apply_raw(&f);
        let d = inner_raw(dom, &f, &pot);
        let kc = &quad * c;
        let a = c.dot(&kc);
        let dp = d.powf(1.0 / p);
        let q = a / dp;
        let nl: Vec<f64> = v.iter().zip(&pot).map(|(&x, &vp)| vp * signed_pow(x, p - 1.0)).collect();
        let w = DVector::from_fn(k, |m, _| inner_raw(dom, &nl, &psi[m]));
        let grad = kc * (2.0 / dp) - w * (2.0 * a / (d * dp));
        (q, grad)
    };
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut inits: Vec<DVector<f64>> = (0..k).map(|m| DVector::from_fn(k, |i, _| f64::from(u8::from(i == m)))).collect();
    for _ in 0..starts {
        let c = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let n = c.norm();
        if n > 0.0 {
            inits.push(c / n);
        }
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for c0 in inits {
        let (q, c) = sphere_ascent(&eval, c0);
        if best.as_ref().map_or(true, |(b, _)| q > *b) {
            best = Some((q, c));
        }
    }
    let (value, c) = best.expect("at least one start");
    let coefficients = (&to_orig * c).iter().zip(&norms).map(|(a, n)| a / n).collect();
    Ok(SpanMax {
        value,
        coefficients,
        condition,
    })
}

fn sphere_ascent(eval: &impl Fn(&DVector<f64>) -> (f64, DVector<f64>), c0: DVector<f64>) -> (f64, DVector<f64>) {
    let mut c = c0;
    let (mut q, mut g) = eval(&c);
    let mut step = 0.1 / g.norm().max(1e-300);
    for _ in 0..ASCENT_ITERS {
        // Q is 0-homogeneous so its gradient is already tangent to the sphere
        if g.norm() <= ASCENT_TOL * q.abs().max(1.0) {
            break;
        }
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &c + &g * step;
            let trial = &trial / trial.norm();
            let (qt, gt) = eval(&trial);
            if qt > q {
                // Barzilai-Borwein length for the next step
                let s = &trial - &c;
                let y = &gt - &g;
                let sy = s.dot(&y);
                step = if sy < 0.0 { s.norm_squared() / -sy } else { 2.0 * step };
                c = trial;
                q = qt;
                g = gt;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (q, c)
}

/// `G_{j,ε} = span{e_1, …, e_j, u_ε}`.
#[derive(Debug, Clone)]
pub struct LinkingSpec {
    pub j: usize,
    pub epsilon: f64,
    pub basis: Arc<EigenBasis>,
    pub bubble: ScalarField,
    pub starts: usize,
    pub seed: u64,
}

impl LinkingSpec {
    pub fn new(basis: Arc<EigenBasis>, j: usize, bubble: &BubbleSpec) -> Result<Self> {
        if j == 0 {
            return Err(Error::Config("linking needs j >= 1".into()));
        }
        if j > basis.count() {
            return Err(Error::Index {
                index: j,
                count: basis.count(),
            });
        }
        if !basis.domain().same_as(&bubble.domain) {
            return Err(Error::Dimension("basis and bubble live on different domains".into()));
        }
        Ok(Self {
            j,
            epsilon: bubble.epsilon,
            basis,
            bubble: make_bubble_field(bubble),
            starts: LINKING_STARTS,
            seed: 1,
        })
    }

    pub fn coefficient_dim(&self) -> usize {
        self.j + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingReport {
    pub j: usize,
    pub epsilon: f64,
    pub lambda: f64,
    /// `m_{j,ε}`
    pub m_value: f64,
    /// `A_ε = Q_λ(u_ε)`
    pub a_epsilon: f64,
    /// Maximizer `v + t u_ε` with `v = Σ eigen_coefficients[i] e_{i+1}`, `t ≥ 0`.
    pub eigen_coefficients: Vec<f64>,
    pub t: f64,
    pub gram_condition: f64,
}

/// `m_{j,ε} = max Q_λ` over `G_{j,ε}`.
pub fn linking_level(ctx: &EnergyContext, spec: &LinkingSpec) -> Result<LinkingReport> {
    let mut vectors: Vec<ScalarField> = spec.basis.fields()[..spec.j].to_vec();
    vectors.push(spec.bubble.clone());
    let best = span_maximum(ctx, &vectors, spec.starts, spec.seed)?;
    let mut c = best.coefficients;
    if c[spec.j] < 0.0 {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    let t = c.pop().expect("bubble coefficient");
    Ok(LinkingReport {
        j: spec.j,
        epsilon: spec.epsilon,
        lambda: ctx.lambda,
        m_value: best.value,
        a_epsilon: quotient(ctx, &spec.bubble)?,
        eigen_coefficients: c,
        t,
        gram_condition: best.condition,
    })
}

/// Terms of the Pohozaev identity for `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevTerms {
    /// `½∫_{∂Ω}(x·ν)|∇u|²`
    pub boundary: f64,
    /// `((N-2)/2)∫|∇u|²`
    pub gradient: f64,
    /// `((2N-μ)/(2p)) D(u)`
    pub nonlocal: f64,
    /// `(λN/2)∫u²`
    pub mass: f64,
}

impl PohozaevTerms {
    pub fn residual(&self) -> f64 {
        self.boundary + self.gradient - self.nonlocal - self.mass
    }

    pub fn scale(&self) -> f64 {
        self.boundary.abs() + self.gradient.abs() + self.nonlocal.abs() + self.mass.abs()
    }

    /// `|residual| / scale`, zero for the zero field.
    pub fn defect(&self) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            0.0
        } else {
            self.residual().abs() / s
        }
    }
}

pub fn pohozaev_terms(ctx: &EnergyContext, u: &ScalarField) -> Result<PohozaevTerms> {
    let n = ctx.domain.dim() as f64;
    let e = energy::energy(ctx, u)?;
    Ok(PohozaevTerms {
        boundary: 0.5 * boundary_weighted_grad_sq(u),
        gradient: 0.5 * (n - 2.0) * e.grad_sq,
        nonlocal: (2.0 * n - ctx.mu()) / (2.0 * ctx.exponent()) * e.nl_double,
        mass: 0.5 * ctx.lambda * n * e.l2_sq,
    })
}

/// `(residual, scale)` of the Pohozaev identity; `(0, 0)` for `u ≡ 0`.
pub fn pohozaev_residual(ctx: &EnergyContext, u: &ScalarField) -> Result<(f64, f64)> {
    let t = pohozaev_terms(ctx, u)?;
    Ok((t.residual(), t.scale()))
}

/// Sides of `∫_{∂Ω}(x·ν)|∇u|² = 2λ∫u²`, the identity left after the Nehari
/// identity is subtracted. For `λ < 0` and `u ≢ 0` the left side is
/// nonnegative on a star-shaped domain while the right side is negative.
pub fn reduced_pohozaev_sides(u: &ScalarField, lambda: f64) -> (f64, f64) {
    (boundary_weighted_grad_sq(u), 2.0 * lambda * l2_sq_integral(u))
}

/// Uniform noise in `[-amplitude, amplitude]` on the mask.
pub fn random_field(domain: &Arc<GridDomain>, seed: u64, amplitude: f64) -> ScalarField {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut v = vec![0.0; domain.node_count()];
    for &x in domain.masked_nodes() {
        v[x] = amplitude * rng.random_range(-1.0..1.0);
    }
    ScalarField::from_values(domain, v).expect("values vanish off the mask")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub seed: u64,
    pub verdict: Verdict,
    pub pohozaev_defect: f64,
    pub final_quotient: f64,
    pub gradient_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub lambda: f64,
    pub n_trivial: usize,
    pub n_concentrating: usize,
    /// Converged nontrivial runs whose Pohozaev defect is below 5%.
    pub n_nontrivial: usize,
    pub n_other: usize,
    pub runs: Vec<ProbeRun>,
}

/// Critical-point searches from random starts seeded `1..=starts`.
pub fn nonexistence_probe(ctx: &EnergyContext, starts: usize, opts: &SolveOptions) -> Result<ProbeReport> {
    if !ctx.domain.is_star_shaped() {
        return Err(Error::Config("the probe needs a domain flagged star-shaped".into()));
    }
    let runs = map_indexed(starts, opts.threads, |i| -> Result<ProbeRun> {
        let seed = i as u64 + 1;
        let init = random_field(&ctx.domain, seed, 1.0);
        let rep = find_critical_point(ctx, &init, opts)?;
        let field = rep.field.as_ref().expect("solver returns its field");
        let defect = pohozaev_terms(ctx, field)?.defect();
        Ok(ProbeRun {
            seed,
            verdict: rep.verdict,
            pohozaev_defect: defect,
            final_quotient: rep.final_quotient,
            gradient_residual: rep.gradient_residual,
        })
    });
    let runs: Vec<ProbeRun> = runs.into_iter().collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&ProbeRun) -> bool| runs.iter().filter(|r| f(r)).count();
    let n_trivial = count(&|r| r.verdict == Verdict::CollapsedTrivial);
    let n_concentrating = count(&|r| r.verdict == Verdict::Concentrating);
    let n_nontrivial =
        count(&|r| r.verdict == Verdict::ConvergedNontrivial && r.pohozaev_defect < POHOZAEV_DEFECT_LIMIT);
    Ok(ProbeReport {
        lambda: ctx.lambda,
        n_trivial,
        n_concentrating,
        n_nontrivial,
        n_other: runs.len() - n_trivial - n_concentrating - n_nontrivial,
        runs,
    })
}

/// Mountain-pass geometry along `u`: a radius with `J(ρu/‖u‖) > 0` and a
/// multiple with `J(tu) < 0`, returned as `(ρ, t)`.
pub fn mountain_pass_bracket(ctx: &EnergyContext, u: &ScalarField) -> Result<(f64, f64)> {
    let e = energy::energy(ctx, u)?;
    let p = ctx.exponent();
    let a = e.quadratic();
    let r = energy::ray_max_from_parts(p, a, e.nl_double)?;
    let rho = 0.5 * r.t_star * e.grad_sq.sqrt();
    // J(tu) < 0 once t^{2p-2} > p a / b
    let t_neg = 1.01 * (p * a / e.nl_double).powf(1.0 / (2.0 * p - 2.0));
    Ok((rho, t_neg))
}
