//! Uniform grids on an interval or a (possibly masked) rectangle with
//! homogeneous Dirichlet boundary conditions.
//!
//! Only interior nodes are stored. Boundary nodes, and nodes switched off by
//! the mask, carry an implicit zero, so every [`GridFunction`] vanishes on the
//! boundary of the discrete domain by construction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pcalc::PExponent;

/// Description of a domain to discretize.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Interval {
        length: f64,
        n: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    },
    /// Rectangle with a row-major node mask (`mask[j * nx + i]`).
    Masked {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
        mask: Vec<bool>,
    },
}

/// A uniform grid of interior nodes.
///
/// In 1D the storage is a single row (`ny == 1` internally) and the
/// y-spacing is reported as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    mask: Vec<bool>,
    masked: bool,
}

fn check_extent(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidGrid(format!("{name} must be positive and finite, got {value}")));
    }
    Ok(())
}

fn check_count(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidGrid(format!("{name} must be at least 1")));
    }
    Ok(())
}

impl Grid {
    pub fn new(spec: &DomainSpec) -> Result<Arc<Grid>> {
        match spec {
            DomainSpec::Interval { length, n } => Grid::interval(*length, *n),
            DomainSpec::Rectangle { lx, ly, nx, ny } => Grid::rectangle(*lx, *ly, *nx, *ny),
            DomainSpec::Masked {
                lx,
                ly,
                nx,
                ny,
                mask,
            } => Grid::masked(*lx, *ly, *nx, *ny, mask.clone()),
        }
    }

    pub fn interval(length: f64, n: usize) -> Result<Arc<Grid>> {
        check_extent("length", length)?;
        check_count("n", n)?;
        Ok(Arc::new(Grid {
            dim: 1,
            nx: n,
            ny: 1,
            lx: length,
            ly: 0.0,
            hx: length / (n + 1) as f64,
            hy: 0.0,
            mask: vec![true; n],
            masked: false,
        }))
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<Grid>> {
        check_extent("lx", lx)?;
        check_extent("ly", ly)?;
        check_count("nx", nx)?;
        check_count("ny", ny)?;
        Ok(Arc::new(Grid {
            dim: 2,
            nx,
            ny,
            lx,
            ly,
            hx: lx / (nx + 1) as f64,
            hy: ly / (ny + 1) as f64,
            mask: vec![true; nx * ny],
            masked: false,
        }))
    }

    pub fn masked(lx: f64, ly: f64, nx: usize, ny: usize, mask: Vec<bool>) -> Result<Arc<Grid>> {
        check_extent("lx", lx)?;
        check_extent("ly", ly)?;
        check_count("nx", nx)?;
        check_count("ny", ny)?;
        if mask.len() != nx * ny {
            return Err(Error::MaskShape {
                expected: nx * ny,
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyDomain);
        }
        let masked = mask.iter().any(|&m| !m);
        Ok(Arc::new(Grid {
            dim: 2,
            nx,
            ny,
            lx,
            ly,
            hx: lx / (nx + 1) as f64,
            hy: ly / (ny + 1) as f64,
            mask,
            masked,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored nodes (`nx * ny`, or `n` in 1D).
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Interior node count along y; zero for 1D grids.
    pub fn ny(&self) -> usize {
        if self.dim == 1 {
            0
        } else {
            self.ny
        }
    }

    /// Number of stored rows (1 in 1D).
    pub(crate) fn rows(&self) -> usize {
        self.ny
    }

    pub fn extents(&self) -> (f64, f64) {
        (self.lx, self.ly)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    /// Quadrature weight of a node: `h` in 1D, `hx * hy` in 2D.
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.hx
        } else {
            self.hx * self.hy
        }
    }

    /// True when some interior node of the bounding rectangle is excluded.
    pub fn is_masked(&self) -> bool {
        self.masked
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_domain(&self, index: usize) -> bool {
        self.mask[index]
    }

    /// Physical coordinates of a stored node.
    pub fn coords(&self, index: usize) -> (f64, f64) {
        let i = index % self.nx;
        let j = index / self.nx;
        let x = (i + 1) as f64 * self.hx;
        let y = if self.dim == 1 {
            0.0
        } else {
            (j + 1) as f64 * self.hy
        };
        (x, y)
    }

    /// Radius of the largest ball inside the domain.
    ///
    /// Exact for intervals and rectangles. For masked grids this is the
    /// largest node-to-excluded-node distance, a lattice approximation.
    pub fn inradius(&self) -> f64 {
        if self.dim == 1 {
            return 0.5 * self.lx;
        }
        if !self.masked {
            return 0.5 * self.lx.min(self.ly);
        }
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let mut outside = Vec::new();
        for j in -1..=ny {
            for i in -1..=nx {
                let excluded = i < 0 || j < 0 || i >= nx || j >= ny || !self.mask[(j * nx + i) as usize];
                if excluded {
                    outside.push(((i + 1) as f64 * self.hx, (j + 1) as f64 * self.hy));
                }
            }
        }
        (0..self.len())
            .filter(|&k| self.mask[k])
            .map(|k| {
                let (x, y) = self.coords(k);
                outside
                    .iter()
                    .map(|&(ox, oy)| ((x - ox).powi(2) + (y - oy).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

/// Node values of a function on a [`Grid`], zero off the mask.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    /// Validates finiteness and the zero-off-mask invariant.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            if !grid.mask[index] && value != 0.0 {
                return Err(Error::OutsideMask(index));
            }
        }
        Ok(GridFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Samples `f(x, y)` at the domain nodes (`y = 0` in 1D).
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                if grid.mask[k] {
                    let (x, y) = grid.coords(k);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        GridFunction::from_values(grid, values)
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Assigns a node value; nodes outside the mask are rejected.
    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite { index, value });
        }
        if !self.grid.mask[index] {
            return Err(Error::OutsideMask(index));
        }
        self.values[index] = value;
        Ok(())
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction::from_raw(&self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self - other`.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        Ok(GridFunction::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        Ok(GridFunction::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        ))
    }

    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Discrete `∫ |u|^p`, one-point quadrature.
    pub fn lp_mass(&self, p: PExponent) -> f64 {
        let p = p.value();
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        self.grid.cell_volume() * s
    }

    /// Natural log of [`lp_mass`](Self::lp_mass), evaluated without
    /// underflow for tiny functions. `-inf` for the zero function.
    pub fn log_lp_mass(&self, p: PExponent) -> f64 {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return f64::NEG_INFINITY;
        }
        let s: f64 = self.values.iter().map(|v| (v.abs() / sup).powf(p.value())).sum();
        p.value() * sup.ln() + (self.grid.cell_volume() * s).ln()
    }

    /// `(∫ |u|^p)^{1/p}`.
    pub fn lp_norm(&self, p: PExponent) -> f64 {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        self.scaled(1.0 / sup).lp_mass(p).powf(1.0 / p.value()) * sup
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rescales to unit L^p mass and flips the sign so the node of largest
    /// magnitude is positive. Returns `None` for the zero function.
    pub fn normalized(&self, p: PExponent) -> Option<GridFunction> {
        let norm = self.lp_norm(p);
        if norm == 0.0 {
            return None;
        }
        let mut out = self.scaled(1.0 / norm);
        out.fix_sign();
        Some(out)
    }

    /// Makes the value of largest magnitude positive (first such node on ties).
    pub fn fix_sign(&mut self) {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in &self.values {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            for v in &mut self.values {
                *v = -*v;
            }
        }
    }
}
