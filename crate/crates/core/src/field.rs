//! Tensor grids on boxes, domain masks and the discrete calculus built on them.
//!
//! A [`GridDomain`] is the box `[-L, L]^N` sampled at `n` points per axis with
//! spacing `h = 2L/(n-1)`. Nodes are numbered lexicographically, last axis
//! fastest. The mask marks the nodes of `Ω`; it never touches the box edge, so
//! every masked node has all `2N` neighbours on the grid and fields extend by
//! zero outside `Ω`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Predicate describing a star-shaped region (with respect to the origin).
#[derive(Clone)]
pub struct StarPredicate(pub Arc<dyn Fn(&[f64]) -> bool + Send + Sync>);

impl StarPredicate {
    pub fn new(f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for StarPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("StarPredicate(..)")
    }
}

/// Region selector for [`make_box_domain`].
#[derive(Debug, Clone)]
pub enum Shape {
    /// Every interior node of the box.
    FullBox,
    /// Open ball `|x| < radius` about the origin.
    Ball { radius: f64 },
    /// Nodes where the predicate holds; the caller asserts star-shapedness.
    StarMask(StarPredicate),
}

/// Serializable description of how a mask was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    FullBox,
    Ball { radius: f64 },
    Mask,
}

/// One grid face separating a node of `Ω` from a node outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Masked node on the inner side.
    pub node: usize,
    /// Unmasked neighbour where the Dirichlet condition is imposed.
    pub outer: usize,
    pub axis: usize,
    /// Outward normal is `sign · e_axis`.
    pub sign: f64,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    dim: u32,
    half_width: f64,
    n: usize,
    h: f64,
    mask: Vec<bool>,
    masked: Vec<usize>,
    strides: Vec<usize>,
    shape: ShapeSpec,
    star_shaped: bool,
    boundary_faces: Vec<BoundaryFace>,
}

/// Build a domain on `[-L, L]^dim` with `n` points per axis.
pub fn make_box_domain(dim: u32, half_width: f64, n: usize, shape: Shape) -> Result<Arc<GridDomain>> {
    GridDomain::new(dim, half_width, n, shape).map(Arc::new)
}

impl GridDomain {
    pub fn new(dim: u32, half_width: f64, n: usize, shape: Shape) -> Result<Self> {
        if !(3..=5).contains(&dim) {
            return domain(format!("grid dimension must be 3, 4 or 5, got {dim}"));
        }
        if n < 8 {
            return domain(format!("need at least 8 points per axis, got {n}"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return domain(format!("half width must be positive, got {half_width}"));
        }
        if let Shape::Ball { radius } = shape {
            if !(radius > 0.0 && radius <= half_width) {
                return domain(format!(
                    "ball radius {radius} must lie in (0, {half_width}]"
                ));
            }
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let total = n.pow(dim);
        let mut mask = vec![false; total];
        let mut x = vec![0.0; dim as usize];
        let mut idx = vec![0usize; dim as usize];
        for node in 0..total {
            Self::unravel(node, n, &mut idx);
            for (xk, &ik) in x.iter_mut().zip(&idx) {
                *xk = -half_width + ik as f64 * h;
            }
            let edge = idx.iter().any(|&i| i == 0 || i == n - 1);
            mask[node] = match &shape {
                Shape::FullBox => !edge,
                Shape::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>() < radius * radius,
                Shape::StarMask(p) => (p.0)(&x),
            };
            if mask[node] && edge {
                return domain("mask touches the edge of the box");
            }
        }
        let spec = match shape {
            Shape::FullBox => ShapeSpec::FullBox,
            Shape::Ball { radius } => ShapeSpec::Ball { radius },
            Shape::StarMask(_) => ShapeSpec::Mask,
        };
        Self::from_mask(dim, half_width, n, mask, spec, true)
    }

    /// Rebuild a domain from an explicit mask.
    pub fn from_mask(
        dim: u32,
        half_width: f64,
        n: usize,
        mask: Vec<bool>,
        shape: ShapeSpec,
        star_shaped: bool,
    ) -> Result<Self> {
        if !(3..=5).contains(&dim) || n < 8 {
            return domain("invalid grid parameters");
        }
        let total = n.pow(dim);
        if mask.len() != total {
            return Err(Error::Dimension(format!(
                "mask has {} entries, grid has {total}",
                mask.len()
            )));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let strides = Self::strides_for(dim, n);
        let mut idx = vec![0usize; dim as usize];
        let masked: Vec<usize> = (0..total).filter(|&i| mask[i]).collect();
        if masked.is_empty() {
            return domain("mask is empty");
        }
        if masked.len() < 1 << dim {
            return domain(format!(
                "mask has {} nodes, fewer than 2^N = {}",
                masked.len(),
                1 << dim
            ));
        }
        let area = h.powi(dim as i32 - 1);
        let mut boundary_faces = Vec::new();
        for &node in &masked {
            Self::unravel(node, n, &mut idx);
            if idx.iter().any(|&i| i == 0 || i == n - 1) {
                return domain("mask touches the edge of the box");
            }
            for (axis, &s) in strides.iter().enumerate() {
                for (outer, sign) in [(node - s, -1.0), (node + s, 1.0)] {
                    if !mask[outer] {
                        boundary_faces.push(BoundaryFace {
                            node,
                            outer,
                            axis,
                            sign,
                            area,
                        });
                    }
                }
            }
        }
        Ok(Self {
            dim,
            half_width,
            n,
            h,
            mask,
            masked,
            strides,
            shape,
            star_shaped,
            boundary_faces,
        })
    }

    fn strides_for(dim: u32, n: usize) -> Vec<usize> {
        (0..dim as usize)
            .map(|k| n.pow(dim - 1 - k as u32))
            .collect()
    }

    fn unravel(mut node: usize, n: usize, idx: &mut [usize]) {
        for slot in idx.iter_mut().rev() {
            *slot = node % n;
            node /= n;
        }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.n
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    /// Quadrature weight `h^N` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }
    pub fn node_count(&self) -> usize {
        self.mask.len()
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn is_masked(&self, node: usize) -> bool {
        self.mask[node]
    }
    /// Masked nodes in lexicographic order.
    pub fn masked_nodes(&self) -> &[usize] {
        &self.masked
    }
    pub fn masked_count(&self) -> usize {
        self.masked.len()
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn shape(&self) -> &ShapeSpec {
        &self.shape
    }
    pub fn is_star_shaped(&self) -> bool {
        self.star_shaped
    }
    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim as usize];
        Self::unravel(node, self.n, &mut idx);
        idx
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinates of a node, written into `out`.
    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for k in (0..self.dim as usize).rev() {
            out[k] = -self.half_width + (rest % self.n) as f64 * self.h;
            rest /= self.n;
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim as usize];
        self.coords_into(node, &mut x);
        x
    }

    /// Grid node closest to `x` (clamped to the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .map(|&v| {
                let i = ((v + self.half_width) / self.h).round();
                i.clamp(0.0, (self.n - 1) as f64) as usize
            })
            .collect();
        self.node_at(&idx)
    }

    /// Same grid geometry and mask.
    pub fn same_as(&self, other: &GridDomain) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.n == other.n
                && self.half_width == other.half_width
                && self.mask == other.mask)
    }

    /// Apply the `(2N+1)`-point Dirichlet Laplacian `-Δ_h` (zero off the mask).
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let diag = 2.0 * self.dim as f64;
        let inv_h2 = 1.0 / (self.h * self.h);
        for &x in &self.masked {
            let mut s = diag * u[x];
            for &st in &self.strides {
                s -= u[x - st] + u[x + st];
            }
            out[x] = s * inv_h2;
        }
        out
    }

    /// `Σ (u_a - u_b)(v_a - v_b)` over every grid edge touching the mask.
    fn edge_sum(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &x in &self.masked {
            for &st in &self.strides {
                acc += (u[x + st] - u[x]) * (v[x + st] - v[x]);
                if !self.mask[x - st] {
                    acc += (u[x] - u[x - st]) * (v[x] - v[x - st]);
                }
            }
        }
        acc
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.mask.len() {
            return Err(Error::Dimension(format!(
                "field has {len} values, grid has {}",
                self.mask.len()
            )));
        }
        Ok(())
    }
}

/// Real values on every node of a [`GridDomain`], zero off the mask.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.domain.same_as(&other.domain) && self.values == other.values
    }
}

impl ScalarField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        Self {
            values: vec![0.0; domain.node_count()],
            domain: domain.clone(),
        }
    }

    /// Sample `f` on the masked nodes.
    pub fn from_fn(domain: &Arc<GridDomain>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; domain.node_count()];
        let mut x = vec![0.0; domain.dim() as usize];
        for &node in domain.masked_nodes() {
            domain.coords_into(node, &mut x);
            values[node] = f(&x);
        }
        Self {
            domain: domain.clone(),
            values,
        }
    }

    /// Wrap raw node values, checking length, finiteness and the zero extension.
    pub fn from_values(domain: &Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        domain.check_len(values.len())?;
        for (node, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value at node {node}")));
            }
            if *v != 0.0 && !domain.is_masked(node) {
                return Err(Error::Domain(format!(
                    "nonzero value at node {node} outside the mask"
                )));
            }
        }
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    /// Wrap values, zeroing anything off the mask.
    pub fn masked(domain: &Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        domain.check_len(values.len())?;
        for (v, &m) in values.iter_mut().zip(domain.mask()) {
            if !m {
                *v = 0.0;
            }
        }
        Self::from_values(domain, values)
    }

    /// Unit value at one masked node.
    pub fn impulse(domain: &Arc<GridDomain>, node: usize) -> Result<Self> {
        if !domain.is_masked(node) {
            return domain_err_node(node);
        }
        let mut f = Self::zeros(domain);
        f.values[node] = 1.0;
        Ok(f)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    /// Pointwise map; the result is re-masked.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for &x in self.domain.masked_nodes() {
            values[x] = f(self.values[x]);
        }
        Self {
            domain: self.domain.clone(),
            values,
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        self.check_same(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        Ok(Self {
            domain: self.domain.clone(),
            values,
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub(crate) fn check_same(&self, other: &ScalarField) -> Result<()> {
        if !self.domain.same_as(&other.domain) {
            return Err(Error::Dimension("fields live on different domains".into()));
        }
        Ok(())
    }

    pub(crate) fn from_raw(domain: &Arc<GridDomain>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.node_count());
        Self {
            domain: domain.clone(),
            values,
        }
    }
}

fn domain_err_node<T>(node: usize) -> Result<T> {
    domain(format!("node {node} is not in the mask"))
}

/// `∫|∇u|²` with forward differences and zero extension, weight `h^N`.
pub fn grad_sq_integral(u: &ScalarField) -> f64 {
    let d = u.domain();
    d.edge_sum(&u.values, &u.values) * d.spacing().powi(d.dim() as i32 - 2)
}

/// Bilinear form of [`grad_sq_integral`].
pub fn grad_inner(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_same(v)?;
    let d = u.domain();
    Ok(d.edge_sum(&u.values, &v.values) * d.spacing().powi(d.dim() as i32 - 2))
}

/// `∫u²` with node weights `h^N`.
pub fn l2_sq_integral(u: &ScalarField) -> f64 {
    u.domain.cell_volume() * u.values.iter().map(|v| v * v).sum::<f64>()
}

/// `∫uv` with node weights `h^N`.
pub fn inner(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_same(v)?;
    Ok(inner_raw(u.domain(), &u.values, &v.values))
}

pub(crate) fn inner_raw(d: &GridDomain, u: &[f64], v: &[f64]) -> f64 {
    d.cell_volume() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

/// `∫_{∂Ω} (x·ν)|∇u|² ds`.
///
/// The normal derivative is the one-sided difference from the inner node to
/// the Dirichlet node; the tangential part vanishes with the boundary data.
/// Faces sit at the Dirichlet node.
pub fn boundary_weighted_grad_sq(u: &ScalarField) -> f64 {
    let d = u.domain();
    let h = d.spacing();
    let mut x = vec![0.0; d.dim() as usize];
    let mut acc = 0.0;
    for face in d.boundary_faces() {
        d.coords_into(face.outer, &mut x);
        let x_dot_nu = face.sign * x[face.axis];
        let dn = (u.values[face.outer] - u.values[face.node]) / h;
        acc += x_dot_nu * dn * dn * face.area;
    }
    acc
}
