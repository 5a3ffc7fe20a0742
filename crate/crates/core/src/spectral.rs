//! Lowest Dirichlet eigenpairs of the grid Laplacian and the splitting
//! `H = Y_j ⊕ E_{j+1}` they induce.
//!
//! The solver is Chebyshev-filtered subspace iteration: a block slightly
//! larger than `k` is repeatedly passed through a Chebyshev polynomial that
//! damps the unwanted upper spectrum, then rotated by a Rayleigh-Ritz step.
//! The upper spectral bound is the Gershgorin bound `4N/h²`. Clusters of
//! equal eigenvalues (common on boxes) are handled naturally by the block.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

use crate::error::{self, Error, Result};
use crate::field::{grad_inner, inner, GridDomain, ScalarField};

/// Residual `‖A e - λ e‖_{L²}` demanded of every returned pair.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest `k` served by [`dirichlet_eigenpairs`].
pub const MAX_MODES: usize = 64;
/// Budget of single-vector operator applications.
pub const MATVEC_BUDGET: usize = 500_000;
pub const DEFAULT_SEED: u64 = 1;

const FILTER_DEGREE: usize = 24;
const NO_NEIGHBOUR: u32 = u32::MAX;

/// `-Δ_h` restricted to masked nodes, in compressed (masked-only) numbering.
#[derive(Debug, Clone)]
pub struct MaskedLaplacian {
    /// `2N` neighbour slots per node; [`NO_NEIGHBOUR`] marks a Dirichlet node.
    neighbours: Vec<u32>,
    degree: usize,
    inv_h2: f64,
    size: usize,
}

impl MaskedLaplacian {
    pub fn new(domain: &GridDomain) -> Self {
        let mut compressed = vec![NO_NEIGHBOUR; domain.node_count()];
        for (c, &node) in domain.masked_nodes().iter().enumerate() {
            compressed[node] = c as u32;
        }
        let degree = 2 * domain.dim() as usize;
        let mut neighbours = Vec::with_capacity(degree * domain.masked_count());
        for &node in domain.masked_nodes() {
            for &s in domain.strides() {
                neighbours.push(compressed[node - s]);
                neighbours.push(compressed[node + s]);
            }
        }
        let h = domain.spacing();
        Self {
            neighbours,
            degree,
            inv_h2: 1.0 / (h * h),
            size: domain.masked_count(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Gershgorin bound on the spectrum.
    pub fn upper_bound(&self) -> f64 {
        2.0 * self.degree as f64 * self.inv_h2
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let diag = self.degree as f64;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = diag * x[i];
            for &j in &self.neighbours[i * self.degree..(i + 1) * self.degree] {
                if j != NO_NEIGHBOUR {
                    s -= x[j as usize];
                }
            }
            *yi = s * self.inv_h2;
        }
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            self.apply(x.column(c).as_slice(), y.column_mut(c).as_mut_slice());
        }
        y
    }

    /// Dense copy, for small test problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.size, self.size);
        for i in 0..self.size {
            a[(i, i)] = self.degree as f64 * self.inv_h2;
            for &j in &self.neighbours[i * self.degree..(i + 1) * self.degree] {
                if j != NO_NEIGHBOUR {
                    a[(i, j as usize)] = -self.inv_h2;
                }
            }
        }
        a
    }
}

/// The first `k` Dirichlet eigenpairs, `L²`-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    domain: Arc<GridDomain>,
    eigenvalues: Vec<f64>,
    fields: Vec<ScalarField>,
    residuals: Vec<f64>,
    matvecs: usize,
    seed: u64,
}

impl EigenBasis {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    /// `λ_i`, 1-based as in the usual notation.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }
    /// `e_i`, 1-based.
    pub fn field(&self, i: usize) -> &ScalarField {
        &self.fields[i - 1]
    }
    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }
    /// `‖A e_i - λ_i e_i‖_{L²}` per pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
    pub fn matvecs(&self) -> usize {
        self.matvecs
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `max |⟨e_i, e_j⟩ - δ_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.count() {
            for j in 0..=i {
                let g = inner(&self.fields[i], &self.fields[j]).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }

    /// `max |∫∇e_i·∇e_j - λ_i δ_ij| / λ_max`.
    pub fn stiffness_error(&self) -> f64 {
        let scale = self.eigenvalues.last().copied().unwrap_or(1.0);
        let mut worst = 0.0f64;
        for i in 0..self.count() {
            for j in 0..=i {
                let g = grad_inner(&self.fields[i], &self.fields[j]).unwrap();
                let want = if i == j { self.eigenvalues[i] } else { 0.0 };
                worst = worst.max((g - want).abs() / scale);
            }
        }
        worst
    }
}

/// The `k` lowest eigenpairs with the default seed.
pub fn dirichlet_eigenpairs(domain: &Arc<GridDomain>, k: usize) -> Result<EigenBasis> {
    dirichlet_eigenpairs_seeded(domain, k, DEFAULT_SEED)
}

pub fn dirichlet_eigenpairs_seeded(domain: &Arc<GridDomain>, k: usize, seed: u64) -> Result<EigenBasis> {
    let m = domain.masked_count();
    if k == 0 || k > MAX_MODES.min(m) {
        return error::domain(format!("k must lie in 1..={}, got {k}", MAX_MODES.min(m)));
    }
    let op = MaskedLaplacian::new(domain);
    let block = (k + k.div_ceil(4) + 4).min(m);
    let (values, vectors, matvecs) = if m <= 4 * block {
        dense_pairs(&op, block)
    } else {
        chefsi(&op, k, block, seed)?
    };

    // back to weighted L² normalisation on the full grid
    let w = domain.cell_volume();
    let scale = 1.0 / w.sqrt();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..block)
        .map(|c| {
            let mut full = vec![0.0; domain.node_count()];
            for (i, &node) in domain.masked_nodes().iter().enumerate() {
                full[node] = vectors[(i, c)] * scale;
            }
            fix_sign(&mut full);
            (values[c], full)
        })
        .collect();
    pairs.sort_by(|a, b| compare_pairs(a, b));
    pairs.truncate(k);

    let mut residuals = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut fields = Vec::with_capacity(k);
    for (lam, v) in pairs {
        let av = domain.laplacian(&v);
        let r2: f64 = domain
            .masked_nodes()
            .iter()
            .map(|&i| (av[i] - lam * v[i]).powi(2))
            .sum();
        let res = (w * r2).sqrt();
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Convergence(format!(
                "eigenpair residual {res:e} exceeds {RESIDUAL_TOL:e}"
            )));
        }
        residuals.push(res);
        eigenvalues.push(lam);
        fields.push(ScalarField::from_values(domain, v)?);
    }
    Ok(EigenBasis {
        domain: domain.clone(),
        eigenvalues,
        fields,
        residuals,
        matvecs,
        seed,
    })
}

fn fix_sign(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * peak) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Ascending eigenvalue; numerically tied values fall back to the
/// lexicographic order of the sign-fixed vectors.
fn compare_pairs(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> Ordering {
    let tie = 1e-9 * a.0.abs().max(b.0.abs());
    if (a.0 - b.0).abs() > tie {
        return a.0.total_cmp(&b.0);
    }
    for (x, y) in a.1.iter().zip(&b.1) {
        if (x - y).abs() > 1e-9 {
            return y.total_cmp(x);
        }
    }
    Ordering::Equal
}

fn dense_pairs(op: &MaskedLaplacian, block: usize) -> (Vec<f64>, DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..op.size()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order[..block].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order[..block]);
    (values, vectors, op.size())
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

/// Rayleigh-Ritz on the span of `x` (orthonormal columns). Returns the Ritz
/// values ascending, the rotated basis and its image under the operator.
fn rayleigh_ritz(op: &MaskedLaplacian, x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ax = op.apply_block(x);
    let mut h = x.transpose() * &ax;
    h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = eig.eigenvectors.select_columns(&order);
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (theta, x * &v, ax * v)
}

/// Degree-`m` Chebyshev filter damping `[cut, upper]`, scaled at `low`.
fn chebyshev_filter(
    op: &MaskedLaplacian,
    x: &DMatrix<f64>,
    degree: usize,
    low: f64,
    cut: f64,
    upper: f64,
) -> DMatrix<f64> {
    let e = 0.5 * (upper - cut);
    let c = 0.5 * (upper + cut);
    let mut sigma = e / (low - c);
    let sigma1 = sigma;
    let gamma = 2.0 / sigma1;
    let mut prev = x.clone();
    let mut cur = (op.apply_block(x) - x * c) * (sigma1 / e);
    for _ in 1..degree {
        let sigma2 = 1.0 / (gamma - sigma);
        let next = (op.apply_block(&cur) - &cur * c) * (2.0 * sigma2 / e) - &prev * (sigma * sigma2);
        prev = cur;
        cur = next;
        sigma = sigma2;
    }
    cur
}

fn chefsi(
    op: &MaskedLaplacian,
    k: usize,
    block: usize,
    seed: u64,
) -> Result<(Vec<f64>, DMatrix<f64>, usize)> {
    let m = op.size();
    let mut rng = Pcg64::seed_from_u64(seed);
    let start = DMatrix::from_fn(m, block, |_, _| rng.random_range(-1.0..1.0));
    let mut x = orthonormalize(start);
    let upper = op.upper_bound() * (1.0 + 1e-12);
    let mut matvecs = 0;
    // Euclidean tolerance equivalent to the weighted L² target
    let tol = 0.1 * RESIDUAL_TOL;
    loop {
        let (theta, xr, axr) = rayleigh_ritz(op, &x);
        matvecs += block;
        let mut converged = true;
        for c in 0..k {
            let r = (axr.column(c) - xr.column(c) * theta[c]).norm();
            if r > tol {
                converged = false;
                break;
            }
        }
        if converged {
            return Ok((theta, xr, matvecs));
        }
        if matvecs + FILTER_DEGREE * block > MATVEC_BUDGET {
            return Err(Error::Convergence(format!(
                "eigen-solver exhausted {MATVEC_BUDGET} matvecs"
            )));
        }
        let cut = theta[block - 1];
        let filtered = chebyshev_filter(op, &xr, FILTER_DEGREE, theta[0], cut, upper);
        matvecs += FILTER_DEGREE * block;
        x = orthonormalize(filtered);
    }
}

/// `u = y + z` with `y ∈ Y_j = span{e_1..e_j}` and `z ∈ E_{j+1}`.
pub fn project_split(u: &ScalarField, basis: &EigenBasis, j: usize) -> Result<(ScalarField, ScalarField)> {
    if j > basis.count() {
        return Err(Error::Index {
            index: j,
            count: basis.count(),
        });
    }
    let mut y = ScalarField::zeros(basis.domain());
    for e in &basis.fields[..j] {
        let c = inner(u, e)?;
        y = y.lin_comb(1.0, e, c)?;
    }
    let z = u.sub(&y)?;
    Ok((y, z))
}
