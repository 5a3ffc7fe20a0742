//! Binary field snapshots.
//!
//! Layout (all little-endian):
//!
//! ```text
//! b"CHQF" | version: u32 = 1 | N: u32 | n: u64 × N | L: f64 | values: f64 × n^N
//! ```
//!
//! Values are in lexicographic node order. The mask and shape live in a JSON
//! sidecar next to the binary file (`<name>.json`).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridDomain, ScalarField, ShapeSpec};

pub const MAGIC: &[u8; 4] = b"CHQF";
pub const VERSION: u32 = 1;

/// Domain metadata stored beside a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub dim: u32,
    pub points_per_axis: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub shape: ShapeSpec,
    pub star_shaped: bool,
    pub masked_count: usize,
    /// Runs `[start, length]` of masked nodes.
    pub mask_runs: Vec<[usize; 2]>,
}

impl Sidecar {
    pub fn of(domain: &GridDomain) -> Self {
        let mut runs: Vec<[usize; 2]> = Vec::new();
        for &node in domain.masked_nodes() {
            match runs.last_mut() {
                Some(r) if r[0] + r[1] == node => r[1] += 1,
                _ => runs.push([node, 1]),
            }
        }
        Self {
            format: "CHQF".into(),
            version: VERSION,
            dim: domain.dim(),
            points_per_axis: domain.points_per_axis(),
            half_width: domain.half_width(),
            spacing: domain.spacing(),
            shape: domain.shape().clone(),
            star_shaped: domain.is_star_shaped(),
            masked_count: domain.masked_count(),
            mask_runs: runs,
        }
    }

    pub fn domain(&self) -> Result<GridDomain> {
        let total = self
            .points_per_axis
            .checked_pow(self.dim)
            .ok_or_else(|| Error::Format("grid size overflows".into()))?;
        let mut mask = vec![false; total];
        for &[start, len] in &self.mask_runs {
            let end = start
                .checked_add(len)
                .filter(|&e| e <= total)
                .ok_or_else(|| Error::Format("mask run out of range".into()))?;
            mask[start..end].iter_mut().for_each(|m| *m = true);
        }
        GridDomain::from_mask(
            self.dim,
            self.half_width,
            self.points_per_axis,
            mask,
            self.shape.clone(),
            self.star_shaped,
        )
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(field: &ScalarField) -> Vec<u8> {
    let d = field.domain();
    let mut out = Vec::with_capacity(24 + 8 * (d.dim() as usize + d.node_count()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&d.dim().to_le_bytes());
    for _ in 0..d.dim() {
        out.extend_from_slice(&(d.points_per_axis() as u64).to_le_bytes());
    }
    out.extend_from_slice(&d.half_width().to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let bytes = self
            .buf
            .get(self.pos..self.pos + K)
            .ok_or_else(|| Error::Format("snapshot truncated".into()))?;
        self.pos += K;
        Ok(bytes.try_into().unwrap())
    }
}

/// Decode a snapshot against a domain (usually rebuilt from the sidecar).
pub fn decode(bytes: &[u8], domain: &Arc<GridDomain>) -> Result<ScalarField> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic, not a CHQF snapshot".into()));
    }
    let version = u32::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let dim = u32::from_le_bytes(r.take()?);
    if dim != domain.dim() {
        return Err(Error::Dimension(format!(
            "snapshot is {dim}-dimensional, domain is {}",
            domain.dim()
        )));
    }
    for _ in 0..dim {
        let n = u64::from_le_bytes(r.take()?);
        if n as usize != domain.points_per_axis() {
            return Err(Error::Dimension(format!(
                "snapshot has {n} points per axis, domain has {}",
                domain.points_per_axis()
            )));
        }
    }
    let l = f64::from_le_bytes(r.take()?);
    if l != domain.half_width() {
        return Err(Error::Dimension(format!(
            "snapshot half width {l} differs from domain {}",
            domain.half_width()
        )));
    }
    let count = domain.node_count();
    if bytes.len() - r.pos != 8 * count {
        return Err(Error::Format(format!(
            "expected {count} values, found {} bytes",
            bytes.len() - r.pos
        )));
    }
    let values = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(domain, values)
}

/// Write `path` and its JSON sidecar.
pub fn dump(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, encode(field))?;
    let side = serde_json::to_string_pretty(&Sidecar::of(field.domain()))
        .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

/// Read a snapshot and rebuild its domain from the sidecar.
pub fn load(path: &Path) -> Result<ScalarField> {
    let side: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)
        .map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    let domain = Arc::new(side.domain()?);
    decode(&fs::read(path)?, &domain)
}
