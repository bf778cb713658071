//! Discrete p-calculus on a [`Grid`]: `J_p`, forward-difference gradients,
//! the p-Dirichlet energy, its gradient (the discrete `-Δ_p` times the cell
//! volume) and the p-Rayleigh quotient.
//!
//! The gradient lives on cells. In 1D there is one cell per edge of the
//! closed interval, `n + 1` in total. In 2D each node `(i, j)` of the closed
//! rectangle with `i <= nx`, `j <= ny` owns a cell carrying the forward
//! differences to its right and upper neighbours. Nodes off the domain read
//! as zero, so the energy is
//!
//! ```text
//! Φ(u) = Σ_cells vol · (1/p) · |Du|^p,   |Du| = (Σ_k D_k u²)^{1/2}
//! ```
//!
//! and at `p = 2` its gradient is `vol` times the standard 3-point / 5-point
//! Dirichlet Laplacian.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// A validated exponent `p ∈ [2, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PExponent(f64);

impl PExponent {
    pub const DEFAULT_MAX: f64 = 200.0;

    pub fn new(p: f64) -> Result<Self> {
        Self::with_max(p, Self::DEFAULT_MAX)
    }

    pub fn with_max(p: f64, max: f64) -> Result<Self> {
        if !(p.is_finite() && (2.0..=max).contains(&p)) {
            return Err(Error::ExponentRange { p, max });
        }
        Ok(PExponent(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Hölder conjugate `p / (p - 1)`.
    pub fn conjugate(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }
}

impl std::fmt::Display for PExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `J_p(w) = |w|^{p-2} w`.
#[inline]
pub fn jp(w: f64, p: PExponent) -> f64 {
    let p = p.value();
    if p == 2.0 {
        w
    } else {
        w.abs().powf(p - 2.0) * w
    }
}

/// Forward differences per gradient cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGradientField {
    dim: usize,
    /// Per cell `[D_x, D_y]`; `D_y` is zero in 1D.
    cells: Vec<[f64; 2]>,
    cell_volume: f64,
}

impl CellGradientField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[[f64; 2]] {
        &self.cells
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `∫ |Du|^p` over the cells.
    pub fn p_integral(&self, p: PExponent) -> f64 {
        let half = 0.5 * p.value();
        self.cell_volume
            * self
                .cells
                .iter()
                .map(|c| (c[0] * c[0] + c[1] * c[1]).powf(half))
                .sum::<f64>()
    }
}

/// Values on the closed rectangle, boundary and masked-out nodes zero.
fn padded(u: &GridFunction) -> Vec<f64> {
    let grid = u.grid();
    let (nx, rows) = (grid.nx(), grid.rows());
    let vals = u.values();
    if grid.dim() == 1 {
        let mut pad = vec![0.0; nx + 2];
        pad[1..=nx].copy_from_slice(vals);
        pad
    } else {
        let w = nx + 2;
        let mut pad = vec![0.0; w * (rows + 2)];
        for j in 0..rows {
            for i in 0..nx {
                let k = j * nx + i;
                if grid.in_domain(k) {
                    pad[(j + 1) * w + i + 1] = vals[k];
                }
            }
        }
        pad
    }
}

pub fn gradient(u: &GridFunction) -> CellGradientField {
    let grid = u.grid();
    let pad = padded(u);
    let (hx, hy) = grid.spacing();
    let nx = grid.nx();
    let cells = if grid.dim() == 1 {
        (0..=nx).map(|e| [(pad[e + 1] - pad[e]) / hx, 0.0]).collect()
    } else {
        let w = nx + 2;
        let mut cells = Vec::with_capacity((nx + 1) * (grid.rows() + 1));
        for j in 0..=grid.rows() {
            for i in 0..=nx {
                let a = pad[j * w + i];
                cells.push([(pad[j * w + i + 1] - a) / hx, (pad[(j + 1) * w + i] - a) / hy]);
            }
        }
        cells
    };
    CellGradientField {
        dim: grid.dim(),
        cells,
        cell_volume: grid.cell_volume(),
    }
}

/// Discrete `Φ(u) = Σ vol · (1/p)|Du|^p`.
pub fn dirichlet_energy(u: &GridFunction, p: PExponent) -> f64 {
    gradient(u).p_integral(p) / p.value()
}

/// Gradient of [`dirichlet_energy`] with respect to the node values.
pub fn energy_gradient(u: &GridFunction, p: PExponent) -> GridFunction {
    energy_and_gradient(u, p).1
}

/// Fused evaluation of `Φ(u)` and `∇Φ(u)`.
pub fn energy_and_gradient(u: &GridFunction, p: PExponent) -> (f64, GridFunction) {
    let grid = u.grid();
    let pv = p.value();
    let linear = pv == 2.0;
    let pad = padded(u);
    let mut gpad = vec![0.0; pad.len()];
    let (hx, hy) = grid.spacing();
    let vol = grid.cell_volume();
    let nx = grid.nx();
    let mut acc = 0.0;
    if grid.dim() == 1 {
        let c = vol / hx;
        for e in 0..=nx {
            let d = (pad[e + 1] - pad[e]) / hx;
            if d == 0.0 {
                continue;
            }
            let wgt = if linear { 1.0 } else { d.abs().powf(pv - 2.0) };
            acc += wgt * d * d;
            let f = c * wgt * d;
            gpad[e + 1] += f;
            gpad[e] -= f;
        }
    } else {
        let w = nx + 2;
        let half = 0.5 * (pv - 2.0);
        let (cx, cy) = (vol / hx, vol / hy);
        for j in 0..=grid.rows() {
            for i in 0..=nx {
                let k = j * w + i;
                let a = pad[k];
                let dx = (pad[k + 1] - a) / hx;
                let dy = (pad[k + w] - a) / hy;
                if dx == 0.0 && dy == 0.0 {
                    continue;
                }
                let s = dx * dx + dy * dy;
                let wgt = if linear { 1.0 } else { s.powf(half) };
                acc += wgt * s;
                let fx = cx * wgt * dx;
                let fy = cy * wgt * dy;
                gpad[k + 1] += fx;
                gpad[k + w] += fy;
                gpad[k] -= fx + fy;
            }
        }
    }
    (vol * acc / pv, unpad(grid, &gpad))
}

/// Diagonal of the Hessian of [`dirichlet_energy`]. Cells with zero gradient
/// contribute nothing.
pub(crate) fn energy_hessian_diagonal(u: &GridFunction, p: PExponent) -> Vec<f64> {
    let grid = u.grid();
    let pv = p.value();
    let pad = padded(u);
    let mut dpad = vec![0.0; pad.len()];
    let (hx, hy) = grid.spacing();
    let vol = grid.cell_volume();
    let nx = grid.nx();
    if grid.dim() == 1 {
        let c = vol * (pv - 1.0) / (hx * hx);
        for e in 0..=nx {
            let d = (pad[e + 1] - pad[e]) / hx;
            if d == 0.0 {
                continue;
            }
            let h = c * d.abs().powf(pv - 2.0);
            dpad[e + 1] += h;
            dpad[e] += h;
        }
    } else {
        let w = nx + 2;
        let (ix2, iy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        for j in 0..=grid.rows() {
            for i in 0..=nx {
                let k = j * w + i;
                let a = pad[k];
                let dx = (pad[k + 1] - a) / hx;
                let dy = (pad[k + w] - a) / hy;
                let s = dx * dx + dy * dy;
                if s == 0.0 {
                    continue;
                }
                // vol |z|^{p-2} (I + (p-2) ẑẑᵀ) contracted with each node's stencil row
                let wgt = vol * s.powf(0.5 * (pv - 2.0));
                let r = (pv - 2.0) / s;
                dpad[k + 1] += wgt * ix2 * (1.0 + r * dx * dx);
                dpad[k + w] += wgt * iy2 * (1.0 + r * dy * dy);
                let t = dx / hx + dy / hy;
                dpad[k] += wgt * (ix2 + iy2 + r * t * t);
            }
        }
    }
    unpad(grid, &dpad).into_values()
}

fn unpad(grid: &std::sync::Arc<Grid>, gpad: &[f64]) -> GridFunction {
    let nx = grid.nx();
    let values = if grid.dim() == 1 {
        gpad[1..=nx].to_vec()
    } else {
        let w = nx + 2;
        (0..grid.len())
            .map(|k| {
                if grid.in_domain(k) {
                    let (i, j) = (k % nx, k / nx);
                    gpad[(j + 1) * w + i + 1]
                } else {
                    0.0
                }
            })
            .collect()
    };
    GridFunction::from_raw(grid, values)
}

/// p-Rayleigh quotient `∫|Du|^p / ∫|u|^p = p·Φ(u) / lp_mass(u)`.
///
/// Evaluated on `u / ‖u‖_∞` so large exponents neither overflow nor underflow.
pub fn rayleigh(u: &GridFunction, p: PExponent) -> Result<f64> {
    let sup = u.sup_norm();
    if sup == 0.0 {
        return Err(Error::ZeroFunction);
    }
    let w = u.scaled(1.0 / sup);
    let mass = w.lp_mass(p);
    Ok(p.value() * dirichlet_energy(&w, p) / mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn p(v: f64) -> PExponent {
        PExponent::new(v).unwrap()
    }

    fn scalar(value: f64) -> GridFunction {
        let g = Grid::interval(1.0, 1).unwrap();
        GridFunction::from_values(&g, vec![value]).unwrap()
    }

    fn random_fn(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    /// Dense negative Laplacian with Dirichlet zeros, 3-point or 5-point.
    fn assembled_laplacian(grid: &Grid) -> Vec<Vec<f64>> {
        let n = grid.len();
        let (hx, hy) = grid.spacing();
        let nx = grid.nx();
        let mut a = vec![vec![0.0; n]; n];
        for k in 0..n {
            if !grid.in_domain(k) {
                continue;
            }
            let (i, j) = (k % nx, k / nx);
            a[k][k] += 2.0 / (hx * hx);
            if i > 0 && grid.in_domain(k - 1) {
                a[k][k - 1] -= 1.0 / (hx * hx);
            }
            if i + 1 < nx && grid.in_domain(k + 1) {
                a[k][k + 1] -= 1.0 / (hx * hx);
            }
            if grid.dim() == 2 {
                a[k][k] += 2.0 / (hy * hy);
                if j > 0 && grid.in_domain(k - nx) {
                    a[k][k - nx] -= 1.0 / (hy * hy);
                }
                if j + 1 < grid.rows() && grid.in_domain(k + nx) {
                    a[k][k + nx] -= 1.0 / (hy * hy);
                }
            }
        }
        a
    }

    #[test]
    fn exponent_range() {
        assert!(PExponent::new(1.5).is_err());
        assert!(PExponent::new(f64::NAN).is_err());
        assert!(PExponent::new(201.0).is_err());
        assert!(PExponent::with_max(300.0, 400.0).is_ok());
        assert_eq!(p(3.0).conjugate(), 1.5);
    }

    #[test]
    fn jp_examples() {
        assert_eq!(jp(2.0, p(2.0)), 2.0);
        assert_eq!(jp(-2.0, p(3.0)), -4.0);
        assert_eq!(jp(0.0, p(7.0)), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let g = gradient(&scalar(1.0));
        assert_eq!(g.cells(), &[[2.0, 0.0], [-2.0, 0.0]]);
        let g = gradient(&scalar(0.0));
        assert!(g.cells().iter().all(|c| c == &[0.0, 0.0]));
        let grid = Grid::interval(1.0, 2).unwrap();
        let u = GridFunction::from_values(&grid, vec![1.0, 1.0]).unwrap();
        let d: Vec<f64> = gradient(&u).cells().iter().map(|c| c[0]).collect();
        assert!((d[0] - 3.0).abs() < 1e-14 && d[1] == 0.0 && (d[2] + 3.0).abs() < 1e-14);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(dirichlet_energy(&scalar(0.0), p(2.0)), 0.0);
        assert!((dirichlet_energy(&scalar(1.0), p(2.0)) - 2.0).abs() < 1e-15);
        assert!((dirichlet_energy(&scalar(1.0), p(3.0)) - 8.0 / 3.0).abs() < 1e-14);
        let (e, _) = energy_and_gradient(&scalar(1.0), p(3.0));
        assert!((e - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn energy_gradient_scalar() {
        assert_eq!(energy_gradient(&scalar(0.0), p(2.0)).values(), &[0.0]);
        // Central difference of Φ(u) = 2u² at u = 1 gives 4.
        let eps = 1e-5;
        let fd = (dirichlet_energy(&scalar(1.0 + eps), p(2.0))
            - dirichlet_energy(&scalar(1.0 - eps), p(2.0)))
            / (2.0 * eps);
        let g = energy_gradient(&scalar(1.0), p(2.0)).get(0);
        assert!((fd - 4.0).abs() < 1e-8);
        assert!((g - 4.0).abs() < 1e-14);
    }

    #[test]
    fn p2_gradient_matches_assembled_stencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mask = vec![true; 5 * 4];
        mask[6] = false;
        mask[13] = false;
        let grids = vec![
            Grid::interval(1.0, 9).unwrap(),
            Grid::interval(2.5, 4).unwrap(),
            Grid::rectangle(1.0, 2.0, 5, 4).unwrap(),
            Grid::masked(1.5, 1.0, 5, 4, mask).unwrap(),
        ];
        for grid in grids {
            let u = random_fn(&grid, &mut rng);
            let a = assembled_laplacian(&grid);
            let g = energy_gradient(&u, p(2.0));
            let vol = grid.cell_volume();
            for (k, row) in a.iter().enumerate() {
                let au: f64 = row.iter().zip(u.values()).map(|(x, y)| x * y).sum();
                assert!(
                    (g.get(k) - vol * au).abs() <= 1e-11 * (1.0 + (vol * au).abs()),
                    "node {k}: {} vs {}",
                    g.get(k),
                    vol * au
                );
            }
        }
    }

    #[test]
    fn gradient_check_against_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grids = vec![Grid::interval(1.0, 17).unwrap(), Grid::rectangle(1.0, 1.0, 6, 5).unwrap()];
        for grid in grids {
            for &pv in &[2.0, 3.0, 4.5] {
                let pe = p(pv);
                let u = random_fn(&grid, &mut rng);
                let phi = random_fn(&grid, &mut rng);
                let eps = 1e-5 * u.sup_norm();
                let plus = dirichlet_energy(&u.add_scaled(eps, &phi).unwrap(), pe);
                let minus = dirichlet_energy(&u.add_scaled(-eps, &phi).unwrap(), pe);
                let fd = (plus - minus) / (2.0 * eps);
                let exact = energy_gradient(&u, pe).dot(&phi);
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12),
                    "p={pv}: fd {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn hessian_diagonal_matches_differenced_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let grids = vec![
            Grid::interval(1.0, 9).unwrap(),
            Grid::rectangle(1.0, 2.0, 5, 4).unwrap(),
            Grid::masked(1.0, 1.0, 3, 3, vec![true, true, false, true, true, true, false, true, true]).unwrap(),
        ];
        for grid in grids {
            for &pv in &[2.0, 3.0, 5.0] {
                let pe = p(pv);
                let u = random_fn(&grid, &mut rng);
                let diag = energy_hessian_diagonal(&u, pe);
                for k in (0..grid.len()).filter(|&k| grid.in_domain(k)) {
                    let eps = 1e-6;
                    let mut e = GridFunction::zeros(&grid);
                    e.set(k, 1.0).unwrap();
                    let gp = energy_gradient(&u.add_scaled(eps, &e).unwrap(), pe).values()[k];
                    let gm = energy_gradient(&u.add_scaled(-eps, &e).unwrap(), pe).values()[k];
                    let fd = (gp - gm) / (2.0 * eps);
                    assert!((fd - diag[k]).abs() <= 1e-5 * diag[k].abs().max(1.0), "p={pv} k={k}: {fd} vs {}", diag[k]);
                }
            }
        }
    }

    #[test]
    fn convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::rectangle(1.0, 1.0, 5, 5).unwrap();
        for &pv in &[2.0, 3.0, 6.0] {
            let pe = p(pv);
            for _ in 0..20 {
                let u = random_fn(&grid, &mut rng);
                let w = random_fn(&grid, &mut rng);
                let theta: f64 = rng.gen();
                let mid = u.scaled(theta).add_scaled(1.0 - theta, &w).unwrap();
                let lhs = dirichlet_energy(&mid, pe);
                let rhs = theta * dirichlet_energy(&u, pe) + (1.0 - theta) * dirichlet_energy(&w, pe);
                assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
            }
        }
    }

    #[test]
    fn rayleigh_examples() {
        assert!((rayleigh(&scalar(1.0), p(2.0)).unwrap() - 8.0).abs() < 1e-14);
        assert!((rayleigh(&scalar(-3.0), p(2.0)).unwrap() - 8.0).abs() < 1e-14);
        assert!(matches!(rayleigh(&scalar(0.0), p(2.0)), Err(Error::ZeroFunction)));

        let grid = Grid::interval(1.0, 127).unwrap();
        let u = GridFunction::from_fn(&grid, |x, _| (std::f64::consts::PI * x).sin()).unwrap();
        let h = grid.spacing().0;
        let expected = 2.0 / (h * h) * (1.0 - (std::f64::consts::PI * h).cos());
        let r = rayleigh(&u, p(2.0)).unwrap();
        assert!((r - expected).abs() < 1e-10 * expected);
        assert!((r - 9.8692).abs() < 1e-3);
    }

    #[test]
    fn rayleigh_large_exponent_is_finite() {
        let grid = Grid::interval(1.0, 63).unwrap();
        let u = GridFunction::from_fn(&grid, |x, _| 1e-12 * x.min(1.0 - x)).unwrap();
        let r = rayleigh(&u, p(150.0)).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jp_strictly_increasing(a in -50.0f64..50.0, b in -50.0f64..50.0, pv in 2.0f64..12.0) {
                prop_assume!(a < b);
                prop_assert!(jp(a, p(pv)) < jp(b, p(pv)));
                prop_assert_eq!(jp(-a, p(pv)), -jp(a, p(pv)));
            }

            #[test]
            fn mass_and_energy_homogeneous(
                vals in prop::collection::vec(-3.0f64..3.0, 6),
                c in -4.0f64..4.0,
                pv in 2.0f64..8.0,
            ) {
                let grid = Grid::interval(1.3, 6).unwrap();
                let u = GridFunction::from_values(&grid, vals).unwrap();
                let pe = p(pv);
                let cu = u.scaled(c);
                let m = u.lp_mass(pe) * c.abs().powf(pv);
                prop_assert!((cu.lp_mass(pe) - m).abs() <= 1e-12 * m.max(1e-300));
                let e = dirichlet_energy(&u, pe) * c.abs().powf(pv);
                prop_assert!((dirichlet_energy(&cu, pe) - e).abs() <= 1e-12 * e.max(1e-300));
                if !u.is_zero() && c != 0.0 {
                    let r = rayleigh(&u, pe).unwrap();
                    prop_assert!((rayleigh(&cu, pe).unwrap() - r).abs() <= 1e-12 * r);
                }
            }

            #[test]
            fn mass_monotone_in_magnitude(
                vals in prop::collection::vec(-3.0f64..3.0, 5),
                idx in 0usize..5,
                bump in 1e-3f64..1.0,
            ) {
                let grid = Grid::interval(1.0, 5).unwrap();
                let u = GridFunction::from_values(&grid, vals.clone()).unwrap();
                let mut bigger = vals;
                bigger[idx] = bigger[idx].abs() + bump;
                let v = GridFunction::from_values(&grid, bigger).unwrap();
                let pe = p(3.0);
                prop_assert!(v.lp_mass(pe) > u.lp_mass(pe));
            }
        }
    }
}
