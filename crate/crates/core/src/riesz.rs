//! The Riesz potential `f ↦ ∫ f(y)|x-y|^{-μ} dy` on grid fields.
//!
//! [`RieszPlan::apply`] is a linear (not circular) convolution: the field and
//! the sampled kernel are zero padded to at least `2n-1` points per axis and
//! multiplied in Fourier space. Rows that are known to be zero before the
//! forward transform, or discarded after the inverse one, are skipped.
//!
//! The kernel is singular at the origin. The self-cell weight is the mean of
//! `|x|^{-μ}` over the ball with the volume of one cell:
//! `(N/(N-μ)) r_eff^{-μ}` with `ω_N r_eff^N = h^N`.

use std::sync::Arc;
use std::time::Instant;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::constants::ball_volume;
use crate::error::{domain, Error, Result};
use crate::field::{inner_raw, GridDomain, ScalarField};

/// Default ceiling on the padded volume, in complex samples (256 MiB each).
pub const DEFAULT_PADDED_CAP: usize = 1 << 24;

/// Largest masked node count accepted by [`apply_direct`].
pub const DIRECT_NODE_GUARD: usize = 100_000;

const BATCH: usize = 32;

pub struct RieszPlan {
    domain: Arc<GridDomain>,
    mu: f64,
    padded: usize,
    /// Transform of the even, real kernel; real up to round-off, stored as such.
    spectrum: Vec<f64>,
    self_cell: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RieszPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RieszPlan")
            .field("mu", &self.mu)
            .field("padded", &self.padded)
            .field("self_cell", &self.self_cell)
            .finish()
    }
}

/// Smallest `m ≥ n` whose prime factors are all in {2, 3, 5, 7}.
pub fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5, 7] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .unwrap()
}

/// `(N/(N-μ)) r_eff^{-μ}` for cell width `h`.
pub fn self_cell_value(dim: u32, mu: f64, h: f64) -> f64 {
    let n = dim as f64;
    let r_eff = (h.powi(dim as i32) / ball_volume(dim)).powf(1.0 / n);
    n / (n - mu) * r_eff.powf(-mu)
}

fn check_mu(dim: u32, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu < dim as f64) {
        return domain(format!("mu must lie in (0, {dim}), got {mu}"));
    }
    Ok(())
}

/// Kernel weight for an offset of `d` cells per axis.
fn kernel_at(offset: &[isize], h: f64, mu: f64, self_cell: f64) -> f64 {
    let r2: isize = offset.iter().map(|d| d * d).sum();
    if r2 == 0 {
        self_cell
    } else {
        (r2 as f64 * h * h).powf(-0.5 * mu)
    }
}

impl RieszPlan {
    pub fn new(domain: &Arc<GridDomain>, mu: f64) -> Result<Self> {
        Self::with_cap(domain, mu, DEFAULT_PADDED_CAP)
    }

    pub fn with_cap(domain: &Arc<GridDomain>, mu: f64, cap: usize) -> Result<Self> {
        let dim = domain.dim();
        check_mu(dim, mu)?;
        let n = domain.points_per_axis();
        let padded = smooth_size(2 * n - 1);
        let volume = padded
            .checked_pow(dim)
            .filter(|&v| v <= cap)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "padded grid {padded}^{dim} exceeds the cap of {cap} samples"
                ))
            })?;
        let h = domain.spacing();
        let self_cell = self_cell_value(dim, mu, h);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);

        let mut buf = vec![Complex::new(0.0, 0.0); volume];
        let mut offset = vec![0isize; dim as usize];
        for (i, c) in buf.iter_mut().enumerate() {
            let mut rest = i;
            let mut inside = true;
            for k in (0..dim as usize).rev() {
                let j = rest % padded;
                rest /= padded;
                // circular index j holds offset j or j - padded
                offset[k] = if j < n { j as isize } else { j as isize - padded as isize };
                if j >= n && j + n <= padded {
                    inside = false;
                }
            }
            if inside {
                c.re = kernel_at(&offset, h, mu, self_cell);
            }
        }
        let full = vec![padded; dim as usize];
        for axis in (0..dim as usize).rev() {
            fft_axis(&mut buf, padded, dim as usize, axis, &full, forward.as_ref());
        }
        let spectrum = buf.iter().map(|c| c.re).collect();
        Ok(Self {
            domain: domain.clone(),
            mu,
            padded,
            spectrum,
            self_cell,
            forward,
            inverse,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn padded_extent(&self) -> usize {
        self.padded
    }
    pub fn self_cell_value(&self) -> f64 {
        self.self_cell
    }
    pub fn kernel_spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Kernel sample for a node offset.
    pub fn kernel_sample(&self, offset: &[isize]) -> f64 {
        kernel_at(offset, self.domain.spacing(), self.mu, self.self_cell)
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        if !self.domain.same_as(f.domain()) {
            return Err(Error::Dimension("field is not on the plan's domain".into()));
        }
        Ok(())
    }

    /// `g(x) = h^N Σ_y k(x-y) f(y)` on the mask.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        let (g, _) = self.convolve(f.values(), None);
        Ok(ScalarField::from_raw(&self.domain, g))
    }

    /// Two potentials for the price of one transform pair.
    pub fn apply_pair(&self, f: &ScalarField, g: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        self.check(f)?;
        self.check(g)?;
        let (a, b) = self.convolve(f.values(), Some(g.values()));
        Ok((
            ScalarField::from_raw(&self.domain, a),
            ScalarField::from_raw(&self.domain, b.unwrap()),
        ))
    }

    pub(crate) fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        self.convolve(f, None).0
    }

    pub(crate) fn apply_pair_raw(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.convolve(f, Some(g));
        (a, b.unwrap())
    }

    fn convolve(&self, re: &[f64], im: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let d = &self.domain;
        let dim = d.dim() as usize;
        let n = d.points_per_axis();
        let p = self.padded;
        let volume = p.pow(dim as u32);
        let mut buf = vec![Complex::new(0.0, 0.0); volume];
        let pstrides: Vec<usize> = (0..dim).map(|k| p.pow((dim - 1 - k) as u32)).collect();
        let to_padded = |node: usize| -> usize {
            let mut rest = node;
            let mut out = 0;
            for k in (0..dim).rev() {
                out += (rest % n) * pstrides[k];
                rest /= n;
            }
            out
        };
        for &node in d.masked_nodes() {
            let c = &mut buf[to_padded(node)];
            c.re = re[node];
            if let Some(im) = im {
                c.im = im[node];
            }
        }
        // forward: the last axis first, while the others are still confined to n
        let mut limits = vec![n; dim];
        for axis in (0..dim).rev() {
            fft_axis(&mut buf, p, dim, axis, &limits, self.forward.as_ref());
            limits[axis] = p;
        }
        for (c, s) in buf.iter_mut().zip(&self.spectrum) {
            *c *= *s;
        }
        // inverse: the first axis first, dropping rows outside the output window
        for axis in 0..dim {
            fft_axis(&mut buf, p, dim, axis, &limits, self.inverse.as_ref());
            limits[axis] = n;
        }
        let scale = d.cell_volume() / volume as f64;
        let mut a = vec![0.0; d.node_count()];
        let mut b = im.map(|_| vec![0.0; d.node_count()]);
        for &node in d.masked_nodes() {
            let c = buf[to_padded(node)];
            a[node] = c.re * scale;
            if let Some(b) = b.as_mut() {
                b[node] = c.im * scale;
            }
        }
        (a, b)
    }

    /// `∬ p(x) q(y) |x-y|^{-μ} dx dy = ⟨p, apply(q)⟩`.
    pub fn double_integral(&self, p: &ScalarField, q: &ScalarField) -> Result<f64> {
        self.check(p)?;
        let v = self.apply(q)?;
        Ok(inner_raw(&self.domain, p.values(), v.values()))
    }
}

/// Transform every line along `axis` whose other coordinates lie below `limits`.
fn fft_axis(
    buf: &mut [Complex<f64>],
    p: usize,
    dim: usize,
    axis: usize,
    limits: &[usize],
    fft: &dyn Fft<f64>,
) {
    let stride = p.pow((dim - 1 - axis) as u32);
    // enumerate line bases over the other axes
    let mut bases = vec![0usize];
    for k in 0..dim {
        if k == axis {
            continue;
        }
        let s = p.pow((dim - 1 - k) as u32);
        let mut next = Vec::with_capacity(bases.len() * limits[k]);
        for &b in &bases {
            for i in 0..limits[k] {
                next.push(b + i * s);
            }
        }
        bases = next;
    }
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if stride == 1 {
        for &b in &bases {
            fft.process_with_scratch(&mut buf[b..b + p], &mut scratch);
        }
        return;
    }
    // batch runs of adjacent lines so the strided gather reads contiguous memory
    let mut work = vec![Complex::new(0.0, 0.0); BATCH * p];
    let mut start = 0;
    while start < bases.len() {
        let mut len = 1;
        while len < BATCH
            && start + len < bases.len()
            && bases[start + len] == bases[start] + len
        {
            len += 1;
        }
        let b0 = bases[start];
        for j in 0..p {
            let row = b0 + j * stride;
            for t in 0..len {
                work[t * p + j] = buf[row + t];
            }
        }
        fft.process_with_scratch(&mut work[..len * p], &mut scratch);
        for j in 0..p {
            let row = b0 + j * stride;
            for t in 0..len {
                buf[row + t] = work[t * p + j];
            }
        }
        start += len;
    }
}

/// Reference evaluation by explicit summation over masked pairs.
pub fn apply_direct(domain: &Arc<GridDomain>, mu: f64, f: &ScalarField) -> Result<ScalarField> {
    check_mu(domain.dim(), mu)?;
    if !domain.same_as(f.domain()) {
        return Err(Error::Dimension("field is not on the given domain".into()));
    }
    let m = domain.masked_count();
    if m > DIRECT_NODE_GUARD {
        return Err(Error::Resource(format!(
            "direct summation over {m} nodes exceeds the guard of {DIRECT_NODE_GUARD}"
        )));
    }
    let dim = domain.dim() as usize;
    let n = domain.points_per_axis();
    let h = domain.spacing();
    let self_cell = self_cell_value(domain.dim(), mu, h);
    // kernel table over absolute per-axis offsets
    let mut table = vec![0.0; n.pow(dim as u32)];
    let mut off = vec![0isize; dim];
    for (i, t) in table.iter_mut().enumerate() {
        let mut rest = i;
        for k in (0..dim).rev() {
            off[k] = (rest % n) as isize;
            rest /= n;
        }
        *t = kernel_at(&off, h, mu, self_cell);
    }
    let idx: Vec<Vec<usize>> = domain
        .masked_nodes()
        .iter()
        .map(|&x| domain.multi_index(x))
        .collect();
    let strides = domain.strides();
    let src: Vec<(usize, f64)> = domain
        .masked_nodes()
        .iter()
        .enumerate()
        .filter(|(_, &y)| f.values()[y] != 0.0)
        .map(|(k, &y)| (k, f.values()[y]))
        .collect();
    let w = domain.cell_volume();
    let mut out = vec![0.0; domain.node_count()];
    for (a, &x) in domain.masked_nodes().iter().enumerate() {
        let xi = &idx[a];
        let mut acc = 0.0;
        for &(b, fy) in &src {
            let yi = &idx[b];
            let mut t = 0;
            for k in 0..dim {
                t += xi[k].abs_diff(yi[k]) * strides[k];
            }
            acc += table[t] * fy;
        }
        out[x] = w * acc;
    }
    Ok(ScalarField::from_raw(domain, out))
}

/// Timing and accuracy of the two evaluation paths on one random field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSample {
    pub n: usize,
    pub direct_ns: u128,
    pub fft_ns: u128,
    pub max_rel_err: f64,
}

fn median(mut v: Vec<u128>) -> u128 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Median wall time of `repeats` runs of each path (planning excluded).
pub fn benchmark(domain: &Arc<GridDomain>, mu: f64, f: &ScalarField, repeats: usize) -> Result<BenchSample> {
    let plan = RieszPlan::new(domain, mu)?;
    let repeats = repeats.max(1);
    let mut fast = None;
    let mut fft_t = Vec::new();
    for _ in 0..repeats {
        let t = Instant::now();
        fast = Some(plan.apply(f)?);
        fft_t.push(t.elapsed().as_nanos());
    }
    let mut slow = None;
    let mut direct_t = Vec::new();
    for _ in 0..repeats {
        let t = Instant::now();
        slow = Some(apply_direct(domain, mu, f)?);
        direct_t.push(t.elapsed().as_nanos());
    }
    Ok(BenchSample {
        n: domain.points_per_axis(),
        direct_ns: median(direct_t),
        fft_ns: median(fft_t),
        max_rel_err: max_rel_err(&fast.unwrap(), &slow.unwrap()),
    })
}

/// `max|a-b| / max|b|` (sup-norm relative error).
pub fn max_rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
    let num = a
        .values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.max_abs();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_box_domain, Shape};
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg64;

    fn random_field(d: &Arc<GridDomain>, seed: u64) -> ScalarField {
        let mut rng = Pcg64::seed_from_u64(seed);
        ScalarField::from_fn(d, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(15), 15);
        assert_eq!(smooth_size(17), 18);
        assert_eq!(smooth_size(127), 128);
        assert_eq!(smooth_size(39), 40);
        assert_eq!(smooth_size(11), 12);
    }

    #[test]
    fn mu_range_is_checked() {
        let d = make_box_domain(3, 1.0, 8, Shape::FullBox).unwrap();
        assert!(matches!(RieszPlan::new(&d, 3.0), Err(Error::Domain(_))));
        assert!(matches!(RieszPlan::new(&d, 0.0), Err(Error::Domain(_))));
        assert!(matches!(RieszPlan::with_cap(&d, 1.0, 100), Err(Error::Resource(_))));
    }

    #[test]
    fn plans_are_deterministic() {
        let d = make_box_domain(3, 1.0, 9, Shape::FullBox).unwrap();
        let a = RieszPlan::new(&d, 1.5).unwrap();
        let b = RieszPlan::new(&d, 1.5).unwrap();
        assert_eq!(a.kernel_spectrum(), b.kernel_spectrum());
        assert!(a.padded_extent() >= 17);
    }

    #[test]
    fn zero_maps_to_zero() {
        let d = make_box_domain(3, 1.0, 8, Shape::FullBox).unwrap();
        let plan = RieszPlan::new(&d, 1.0).unwrap();
        let z = ScalarField::zeros(&d);
        assert!(plan.apply(&z).unwrap().is_zero());
        assert!(apply_direct(&d, 1.0, &z).unwrap().is_zero());
        assert_eq!(plan.double_integral(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let d = make_box_domain(3, 1.0, 8, Shape::FullBox).unwrap();
        let plan = RieszPlan::new(&d, 1.0).unwrap();
        let p = d.node_at(&[2, 3, 4]);
        let f = ScalarField::impulse(&d, p).unwrap();
        let w = d.cell_volume();
        for g in [plan.apply(&f).unwrap(), apply_direct(&d, 1.0, &f).unwrap()] {
            for &x in d.masked_nodes() {
                let xp = d.coords(p);
                let xx = d.coords(x);
                let r: f64 = xp.iter().zip(&xx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let want = if x == p { w * plan.self_cell_value() } else { w / r };
                assert!((g.values()[x] - want).abs() <= 1e-12 * want, "{x}");
            }
        }
    }

    #[test]
    fn fft_matches_direct_on_random_fields() {
        for (dim, n, mu) in [(3, 8, 1.0), (3, 12, 2.0), (4, 8, 2.0), (3, 10, 0.5)] {
            let d = make_box_domain(dim, 1.0, n, Shape::FullBox).unwrap();
            let plan = RieszPlan::new(&d, mu).unwrap();
            for seed in 0..3 {
                let f = random_field(&d, seed);
                let e = max_rel_err(&plan.apply(&f).unwrap(), &apply_direct(&d, mu, &f).unwrap());
                assert!(e < 1e-10, "N={dim} n={n}: {e}");
            }
        }
    }

    #[test]
    fn ball_masks_and_pairs() {
        let d = make_box_domain(3, 1.0, 11, Shape::Ball { radius: 0.85 }).unwrap();
        let plan = RieszPlan::new(&d, 1.0).unwrap();
        let f = random_field(&d, 7);
        let g = random_field(&d, 8);
        let (a, b) = plan.apply_pair(&f, &g).unwrap();
        assert!(max_rel_err(&a, &apply_direct(&d, 1.0, &f).unwrap()) < 1e-10);
        assert!(max_rel_err(&b, &plan.apply(&g).unwrap()) < 1e-12);
    }

    #[test]
    fn plan_reuse_is_stateless() {
        let d = make_box_domain(3, 1.0, 8, Shape::FullBox).unwrap();
        let plan = RieszPlan::new(&d, 1.0).unwrap();
        let f = random_field(&d, 3);
        let first = plan.apply(&f).unwrap();
        for _ in 0..100 {
            assert_eq!(plan.apply(&f).unwrap(), first);
        }
        assert_eq!(RieszPlan::new(&d, 1.0).unwrap().apply(&f).unwrap(), first);
    }

    #[test]
    fn two_impulse_double_integral() {
        let d = make_box_domain(3, 1.0, 9, Shape::FullBox).unwrap();
        let mu = 1.3;
        let plan = RieszPlan::new(&d, mu).unwrap();
        let a = d.node_at(&[2, 2, 2]);
        let b = d.node_at(&[5, 2, 6]);
        let dist = d.spacing() * 5.0;
        let p = ScalarField::impulse(&d, a).unwrap().add(&ScalarField::impulse(&d, b).unwrap()).unwrap();
        let want = d.cell_volume().powi(2) * (2.0 * dist.powf(-mu) + 2.0 * plan.self_cell_value());
        let got = plan.double_integral(&p, &p).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn double_integral_symmetric_and_positive() {
        let d = make_box_domain(3, 1.0, 10, Shape::FullBox).unwrap();
        let plan = RieszPlan::new(&d, 2.0).unwrap();
        for seed in 0..10 {
            let p = random_field(&d, seed);
            let q = random_field(&d, seed + 100);
            let pq = plan.double_integral(&p, &q).unwrap();
            let qp = plan.double_integral(&q, &p).unwrap();
            assert!((pq - qp).abs() <= 1e-12 * pq.abs().max(1e-300) + 1e-15);
            assert!(plan.double_integral(&p, &p).unwrap() >= 0.0);
        }
    }

    #[test]
    fn translation_equivariance() {
        let d = make_box_domain(3, 1.0, 12, Shape::FullBox).unwrap();
        let plan = RieszPlan::new(&d, 1.0).unwrap();
        let s = d.strides()[2];
        // support away from the edge so the shift stays inside the mask
        let f = ScalarField::from_fn(&d, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (0.25 - r2).max(0.0)
        });
        let mut shifted = vec![0.0; d.node_count()];
        for &x in d.masked_nodes() {
            if f.values()[x] != 0.0 {
                shifted[x + s] = f.values()[x];
            }
        }
        let g = ScalarField::from_values(&d, shifted).unwrap();
        let a = plan.apply(&f).unwrap();
        let b = plan.apply(&g).unwrap();
        for &x in d.masked_nodes() {
            if d.is_masked(x + s) {
                let (u, v) = (a.values()[x], b.values()[x + s]);
                assert!((u - v).abs() < 1e-12 * u.abs().max(1.0));
            }
        }
    }
}
