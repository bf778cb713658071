//! Reference solutions that do not go through the flow solver.
//!
//! * The discrete sine vectors diagonalize the 3-point / 5-point Dirichlet
//!   Laplacian on unmasked grids, which gives the `p = 2` scheme in closed
//!   form: one implicit step maps the mode coefficient `ĝ_m` to
//!   `ĝ_m / (1 + τ λ_m)`.
//! * [`rayleigh_minimize`] minimizes the p-Rayleigh quotient directly by
//!   projected gradient descent on the unit `L^p` sphere.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{ground_state_residual, GroundStateResult};
use crate::grid::{Grid, GridFunction};
use crate::pcalc::{energy_and_gradient, jp, PExponent};

/// Sine basis of one axis: `φ_m(i) = sin(m π i / (n + 1))`, `i, m = 1..n`.
#[derive(Debug, Clone)]
struct AxisBasis {
    n: usize,
    /// Row-major `n × n`, `sines[(m-1) * n + (i-1)]`.
    sines: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl AxisBasis {
    fn new(n: usize, h: f64) -> Self {
        let mut sines = Vec::with_capacity(n * n);
        for m in 1..=n {
            for i in 1..=n {
                sines.push((PI * (m * i) as f64 / (n + 1) as f64).sin());
            }
        }
        let eigenvalues = (1..=n)
            .map(|m| 2.0 / (h * h) * (1.0 - (PI * m as f64 / (n + 1) as f64).cos()))
            .collect();
        AxisBasis { n, sines, eigenvalues }
    }

    fn sine(&self, m: usize, i: usize) -> f64 {
        self.sines[m * self.n + i]
    }

    /// Coefficients with respect to the orthogonal basis.
    fn analyze(&self, values: &[f64]) -> Vec<f64> {
        let norm = 2.0 / (self.n + 1) as f64;
        (0..self.n)
            .map(|m| norm * (0..self.n).map(|i| self.sine(m, i) * values[i]).sum::<f64>())
            .collect()
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|m| coeffs[m] * self.sine(m, i)).sum())
            .collect()
    }
}

/// Discrete sine eigenbasis of the negative Dirichlet Laplacian on an
/// unmasked interval or rectangle.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Arc<Grid>,
    x: AxisBasis,
    y: Option<AxisBasis>,
}

impl SpectralBasis {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        if grid.is_masked() {
            return Err(Error::MaskedGrid);
        }
        let (hx, hy) = grid.spacing();
        let y = (grid.dim() == 2).then(|| AxisBasis::new(grid.ny(), hy));
        Ok(SpectralBasis {
            grid: Arc::clone(grid),
            x: AxisBasis::new(grid.nx(), hx),
            y,
        })
    }

    /// `λ_{(mx, my)}`, modes counted from 1. `my` is ignored in 1D.
    pub fn eigenvalue(&self, mx: usize, my: usize) -> f64 {
        let lx = self.x.eigenvalues[mx - 1];
        match &self.y {
            Some(y) => lx + y.eigenvalues[my - 1],
            None => lx,
        }
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = match &self.y {
            None => self.x.eigenvalues.clone(),
            Some(y) => self
                .x
                .eigenvalues
                .iter()
                .flat_map(|a| y.eigenvalues.iter().map(move |b| a + b))
                .collect(),
        };
        all.sort_by(f64::total_cmp);
        all
    }

    /// Unnormalized eigenvector `φ_{(mx, my)}`.
    pub fn mode(&self, mx: usize, my: usize) -> GridFunction {
        let nx = self.grid.nx();
        let values = (0..self.grid.len())
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                let sx = self.x.sine(mx - 1, i);
                match &self.y {
                    Some(y) => sx * y.sine(my - 1, j),
                    None => sx,
                }
            })
            .collect();
        GridFunction::from_raw(&self.grid, values)
    }

    /// Applies `c_m ↦ f(λ_m) c_m` in the eigenbasis.
    fn apply_spectral(&self, g: &GridFunction, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        if !Arc::ptr_eq(g.grid(), &self.grid) && **g.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let nx = self.grid.nx();
        let values = match &self.y {
            None => {
                let mut c = self.x.analyze(g.values());
                for (m, cm) in c.iter_mut().enumerate() {
                    *cm *= f(self.x.eigenvalues[m]);
                }
                self.x.synthesize(&c)
            }
            Some(y) => {
                let ny = y.n;
                // Transform rows (x), then columns (y).
                let mut rows: Vec<Vec<f64>> = g.values().chunks(nx).map(|r| self.x.analyze(r)).collect();
                let mut coef = vec![vec![0.0; ny]; nx];
                for (mx, col) in coef.iter_mut().enumerate() {
                    let line: Vec<f64> = (0..ny).map(|j| rows[j][mx]).collect();
                    *col = y.analyze(&line);
                    for (my, c) in col.iter_mut().enumerate() {
                        *c *= f(self.x.eigenvalues[mx] + y.eigenvalues[my]);
                    }
                }
                for (mx, col) in coef.iter().enumerate() {
                    let line = y.synthesize(col);
                    for j in 0..ny {
                        rows[j][mx] = line[j];
                    }
                }
                rows.iter().flat_map(|r| self.x.synthesize(r)).collect()
            }
        };
        GridFunction::from_values(&self.grid, values)
    }
}

/// Exact `p = 2` solution of the implicit scheme after `steps` steps of size
/// `tau` (time `t = steps · tau`): `ĝ_m (1 + τ λ_m)^{-steps}` per mode.
pub fn heat_flow_exact(g: &GridFunction, tau: f64, steps: usize) -> Result<GridFunction> {
    let basis = SpectralBasis::new(g.grid())?;
    heat_flow_exact_with(&basis, g, tau, steps)
}

/// As [`heat_flow_exact`] with a prebuilt basis.
pub fn heat_flow_exact_with(basis: &SpectralBasis, g: &GridFunction, tau: f64, steps: usize) -> Result<GridFunction> {
    let k = i32::try_from(steps).map_err(|_| Error::InvalidConfig("too many steps".into()))?;
    basis.apply_spectral(g, |lambda| (1.0 + tau * lambda).powi(-k))
}

/// Smallest eigenvalue of the negative discrete Dirichlet Laplacian,
/// `Σ_axes (2/h²)(1 - cos(π h / L))`.
pub fn smallest_eigenvalue_closed_form(grid: &Grid) -> Result<f64> {
    if grid.is_masked() {
        return Err(Error::MaskedGrid);
    }
    let (lx, ly) = grid.extents();
    let (hx, hy) = grid.spacing();
    let axis = |h: f64, l: f64| 2.0 / (h * h) * (1.0 - (PI * h / l).cos());
    Ok(if grid.dim() == 1 {
        axis(hx, lx)
    } else {
        axis(hx, lx) + axis(hy, ly)
    })
}

const MINIMIZER_MAX_ITERS: usize = 500_000;

/// Direct minimization of the p-Rayleigh quotient over nonzero grid
/// functions, independent of the flow. It shares the discretization with the
/// flow, so agreement between the two says nothing about discretization error.
pub fn rayleigh_minimize(grid: &Arc<Grid>, p: PExponent, seed: u64, tol: f64) -> Result<GroundStateResult> {
    rayleigh_minimize_with(grid, p, seed, tol, MINIMIZER_MAX_ITERS)
}

/// `R(u) = p Φ(u) / M(u)` and its gradient `p (∇Φ - R vol J_p(u)) / M`.
fn quotient_and_gradient(u: &GridFunction, p: PExponent) -> (f64, GridFunction) {
    let pv = p.value();
    let (phi, grad) = energy_and_gradient(u, p);
    let mass = u.lp_mass(p);
    let r = pv * phi / mass;
    let vol = u.grid().cell_volume();
    let values = grad
        .values()
        .iter()
        .zip(u.values())
        .map(|(g, &x)| pv * (g - r * vol * jp(x, p)) / mass)
        .collect();
    (r, GridFunction::from_raw(u.grid(), values))
}

/// Projected BB gradient descent on the unit `L^p` sphere with Armijo
/// backtracking. Converged once the relative residual of
/// `-Δ_p ψ = λ |ψ|^{p-2} ψ` is below `tol`.
pub fn rayleigh_minimize_with(
    grid: &Arc<Grid>,
    p: PExponent,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> Result<GroundStateResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = GridFunction::from_fn(grid, |_, _| 0.25 + rng.gen::<f64>())?;
    let mut u = init.normalized(p).ok_or(Error::ZeroFunction)?;
    let (mut r, mut g) = quotient_and_gradient(&u, p);
    let mut alpha = 0.1 / g.sup_norm().max(f64::MIN_POSITIVE);
    let mut use_bb1 = true;
    let mut residual = ground_state_residual(&u, r, p);

    for iter in 0..max_iters {
        if !residual.is_finite() {
            return Err(Error::NaN("Rayleigh minimization"));
        }
        if residual <= tol {
            let mut psi = u;
            psi.fix_sign();
            return Ok(GroundStateResult {
                mu_p: r.powf(1.0 / (p.value() - 1.0)),
                lambda_p: r,
                psi,
                converged: true,
                degenerate_zero: false,
                steps_used: iter,
            });
        }
        let gg = g.dot(&g);
        let mut accepted = None;
        for _ in 0..60 {
            if let Some(trial) = u.add_scaled(-alpha, &g)?.normalized_raw(p) {
                let (rt, gt) = quotient_and_gradient(&trial, p);
                let s = trial.sub(&u)?;
                let decrease = 1e-4 * alpha * gg;
                let ok = if (r - rt).abs() <= 1e-12 * r {
                    -0.5 * (g.dot(&s) + gt.dot(&s)) >= decrease
                } else {
                    rt <= r - decrease
                };
                if ok {
                    accepted = Some((trial, rt, gt, s));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((u_new, r_new, g_new, s)) = accepted else {
            return Err(Error::MinimizerNotConverged { iters: iter, residual });
        };
        let y = g_new.sub(&g)?;
        let sy = s.dot(&y);
        alpha = if sy > 0.0 {
            let bb = if use_bb1 { s.dot(&s) / sy } else { sy / y.dot(&y) };
            use_bb1 = !use_bb1;
            bb
        } else {
            2.0 * alpha
        };
        u = u_new;
        r = r_new;
        g = g_new;
        residual = ground_state_residual(&u, r, p);
    }
    Err(Error::MinimizerNotConverged {
        iters: max_iters,
        residual,
    })
}

impl GridFunction {
    /// Unit `L^p` mass without sign fixing.
    fn normalized_raw(&self, p: PExponent) -> Option<GridFunction> {
        let n = self.lp_norm(p);
        (n > 0.0 && n.is_finite()).then(|| self.scaled(1.0 / n))
    }
}
