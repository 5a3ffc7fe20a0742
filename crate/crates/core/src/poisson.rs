//! Dirichlet Poisson solves `-Δ_h x = b` on a domain mask.
//!
//! On the full box the discrete Laplacian is diagonalised by the type-I sine
//! transform, done here through a complex FFT of length `2(m+1)`. Other masks
//! use conjugate gradients preconditioned by that box solve.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::GridDomain;

const PCG_TOL: f64 = 1e-11;
const PCG_MAX_ITERS: usize = 2000;

pub struct PoissonSolver {
    domain: Arc<GridDomain>,
    /// Interior points per axis, `n - 2`.
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    /// 1-D eigenvalues `(4/h²) sin²(πk/(2(m+1)))`, k = 1..m.
    eig1: Vec<f64>,
    full_box: bool,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("m", &self.m)
            .field("full_box", &self.full_box)
            .finish()
    }
}

impl PoissonSolver {
    pub fn new(domain: &Arc<GridDomain>) -> Self {
        let n = domain.points_per_axis();
        let m = n - 2;
        let h = domain.spacing();
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        let eig1 = (1..=m)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        let full_box = domain.masked_count() == m.pow(domain.dim());
        Self {
            domain: domain.clone(),
            m,
            fft,
            eig1,
            full_box,
        }
    }

    /// Solve on the mask; `rhs` is a full-grid vector, the result vanishes off the mask.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.full_box {
            return Ok(self.box_solve(rhs));
        }
        self.pcg(rhs)
    }

    fn pcg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let d = &self.domain;
        let nodes = d.masked_nodes();
        let dot = |u: &[f64], v: &[f64]| nodes.iter().map(|&i| u[i] * v[i]).sum::<f64>();
        let mut x = vec![0.0; b.len()];
        let mut r: Vec<f64> = vec![0.0; b.len()];
        for &i in nodes {
            r[i] = b[i];
        }
        let b_norm = dot(&r, &r).sqrt();
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..PCG_MAX_ITERS {
            let ap = d.laplacian(&p);
            let alpha = rz / dot(&p, &ap);
            for &i in nodes {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= PCG_TOL * b_norm {
                return Ok(x);
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for &i in nodes {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Convergence(format!(
            "Poisson CG did not reach {PCG_TOL:e} in {PCG_MAX_ITERS} iterations"
        )))
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z = self.box_solve(r);
        for (v, &m) in z.iter_mut().zip(self.domain.mask()) {
            if !m {
                *v = 0.0;
            }
        }
        z
    }

    /// Exact inverse of the box-interior Laplacian.
    fn box_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = &self.domain;
        let n = d.points_per_axis();
        let m = self.m;
        let dim = d.dim() as usize;
        // gather the box interior into an m^N array
        let total = m.pow(dim as u32);
        let mut work = vec![0.0; total];
        let mut idx = vec![0usize; dim];
        for (c, w) in work.iter_mut().enumerate() {
            let mut rest = c;
            for k in (0..dim).rev() {
                idx[k] = rest % m + 1;
                rest /= m;
            }
            let node: usize = idx.iter().zip(d.strides()).map(|(i, s)| i * s).sum();
            *w = rhs[node];
        }
        for axis in 0..dim {
            self.dst_axis(&mut work, axis);
        }
        // divide by eigenvalues; the unnormalised DST-I squared is ((m+1)/2)·I per axis
        let norm = (2.0 / (m + 1) as f64).powi(dim as i32);
        for (c, w) in work.iter_mut().enumerate() {
            let mut rest = c;
            let mut lam = 0.0;
            for _ in 0..dim {
                lam += self.eig1[rest % m];
                rest /= m;
            }
            *w *= norm / lam;
        }
        for axis in 0..dim {
            self.dst_axis(&mut work, axis);
        }
        let mut out = vec![0.0; n.pow(dim as u32)];
        for (c, w) in work.iter().enumerate() {
            let mut rest = c;
            for k in (0..dim).rev() {
                idx[k] = rest % m + 1;
                rest /= m;
            }
            let node: usize = idx.iter().zip(d.strides()).map(|(i, s)| i * s).sum();
            out[node] = *w;
        }
        out
    }

    /// In-place unnormalised DST-I along one axis of an `m^N` array.
    fn dst_axis(&self, a: &mut [f64], axis: usize) {
        let m = self.m;
        let dim = self.domain.dim() as usize;
        let stride = m.pow((dim - 1 - axis) as u32);
        let len = 2 * (m + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let lines = a.len() / m;
        for line in 0..lines {
            let outer = line / stride;
            let inner = line % stride;
            let base = outer * stride * m + inner;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for j in 0..m {
                let v = a[base + j * stride];
                buf[j + 1].re = v;
                buf[len - 1 - j].re = -v;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            // FFT of the odd extension is -2i·DST
            for k in 0..m {
                a[base + k * stride] = -0.5 * buf[k + 1].im;
            }
        }
    }
}
