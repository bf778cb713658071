//! One implicit (backward Euler) step of the flow `J_p(v_t) = Δ_p v`.
//!
//! The new iterate minimizes the strictly convex step functional
//!
//! ```text
//! I(w) = τ Σ vol (1/p) |(w - v_prev)/τ|^p + Φ(w)
//! ```
//!
//! whose critical-point equation is `vol·J_p((w - v_prev)/τ) + ∇Φ(w) = 0`,
//! the discrete form of `J_p((v^k - v^{k-1})/τ) = Δ_p v^k`. The minimizer is
//! found by gradient descent with Barzilai–Borwein step proposals and an
//! Armijo backtracking safeguard.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::pcalc::{energy_and_gradient, energy_gradient, energy_hessian_diagonal, jp, PExponent};

/// Armijo sufficient-decrease constant.
const ARMIJO_C1: f64 = 1e-4;
/// Relative size below which a change of `I` is indistinguishable from
/// rounding; the decrease is then judged from the trapezoid estimate
/// `½⟨∇I(x) + ∇I(x⁺), x⁺ - x⟩`.
const ROUNDOFF_REL: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 60;
/// The inner solve targets this fraction of `tol_inner`. The error in the
/// iterate is roughly the residual times the conditioning of `∇²I`, which
/// for small `τ` on fine grids is in the hundreds.
const INNER_MARGIN: f64 = 1e-2;
/// Iterations without halving the best gradient norm that count as a stall.
const STALL_ITERS: usize = 200;
/// Smallest diagonal entry kept, relative to the largest.
const DIAG_FLOOR_REL: f64 = 1e-40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    /// Relative sup-norm tolerance on the step functional gradient.
    pub tol_inner: f64,
    pub max_inner_iters: usize,
}

impl StepConfig {
    pub const DEFAULT_TOL_INNER: f64 = 1e-10;
    pub const DEFAULT_MAX_INNER_ITERS: usize = 50_000;

    pub fn new(tau: f64) -> Result<Self> {
        let cfg = StepConfig {
            tau,
            tol_inner: Self::DEFAULT_TOL_INNER,
            max_inner_iters: Self::DEFAULT_MAX_INNER_ITERS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tol(mut self, tol_inner: f64) -> Result<Self> {
        self.tol_inner = tol_inner;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if !(self.tol_inner > 0.0 && self.tol_inner < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tol_inner must lie in (0, 1), got {}",
                self.tol_inner
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("max_inner_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub v_new: GridFunction,
    pub inner_iters: usize,
    /// [`el_residual`] at `v_new`.
    pub residual: f64,
    /// `∫ |v_new - v_prev|^p / τ^{p-1}`.
    pub dissipation: f64,
}

/// `I(w)` for the given previous iterate.
pub fn step_functional(w: &GridFunction, v_prev: &GridFunction, tau: f64, p: PExponent) -> f64 {
    evaluate(w, v_prev, tau, p).0
}

/// `I(w)`, `∇I(w) = vol·J_p((w - v_prev)/τ) + ∇Φ(w)` and the larger sup-norm
/// of its two terms.
fn evaluate(w: &GridFunction, v_prev: &GridFunction, tau: f64, p: PExponent) -> (f64, GridFunction, f64) {
    let (phi, grad) = energy_and_gradient(w, p);
    let vol = w.grid().cell_volume();
    let pv = p.value();
    let mut g = grad.into_values();
    let mut term = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut kinetic = 0.0;
    for ((gk, &wk), &vk) in g.iter_mut().zip(w.values()).zip(v_prev.values()) {
        let d = (wk - vk) / tau;
        if d == 0.0 {
            continue;
        }
        let j = jp(d, p);
        kinetic += j * d;
        term = term.max((vol * j).abs());
        *gk += vol * j;
    }
    (tau * vol * kinetic / pv + phi, GridFunction::from_raw(w.grid(), g), term)
}

/// Sup-norm of `vol·J_p((w - v_prev)/τ) + ∇Φ(w)`, normalized by
/// `max(1, ‖∇Φ(v_prev)‖_∞)`.
pub fn el_residual(w: &GridFunction, v_prev: &GridFunction, tau: f64, p: PExponent) -> f64 {
    let scale = energy_gradient(v_prev, p).sup_norm().max(1.0);
    evaluate(w, v_prev, tau, p).1.sup_norm() / scale
}

/// Advances one step from `v_prev`, starting the inner iteration at `v_prev`.
pub fn implicit_step(v_prev: &GridFunction, cfg: &StepConfig, p: PExponent) -> Result<StepResult> {
    implicit_step_from(v_prev, v_prev, cfg, p)
}

/// As [`implicit_step`] with an explicit inner starting point.
pub fn implicit_step_from(
    v_prev: &GridFunction,
    start: &GridFunction,
    cfg: &StepConfig,
    p: PExponent,
) -> Result<StepResult> {
    cfg.validate()?;
    v_prev.check_same_grid(start)?;
    let scale = v_prev.sup_norm();
    if scale == 0.0 {
        return Ok(StepResult {
            v_new: GridFunction::zeros(v_prev.grid()),
            inner_iters: 0,
            residual: 0.0,
            dissipation: 0.0,
        });
    }
    // The scheme is positively homogeneous of degree one, so the inner
    // problem is solved on unit-sup-norm data and scaled back.
    let v_hat = v_prev.scaled(1.0 / scale);
    let start_hat = start.scaled(1.0 / scale);
    let (w_hat, iters) = minimize_step(&v_hat, start_hat, cfg, p)?;
    let v_new = w_hat.scaled(scale);
    let velocity = v_new.sub(v_prev)?.scaled(1.0 / cfg.tau);
    let dissipation = cfg.tau * velocity.lp_mass(p);
    let residual = el_residual(&v_new, v_prev, cfg.tau, p);
    if !(dissipation.is_finite() && residual.is_finite()) {
        return Err(Error::NaN("implicit step"));
    }
    Ok(StepResult {
        v_new,
        inner_iters: iters,
        residual,
        dissipation,
    })
}

/// Inverse of the diagonal of `∇²I(w)`, floored so that flat nodes
/// (zero velocity and zero gradient on all adjacent cells) stay finite.
fn inverse_diagonal(w: &GridFunction, v_prev: &GridFunction, tau: f64, p: PExponent) -> Vec<f64> {
    let pv = p.value();
    let c = w.grid().cell_volume() * (pv - 1.0) / tau;
    let mut diag = energy_hessian_diagonal(w, p);
    for ((dk, &wk), &vk) in diag.iter_mut().zip(w.values()).zip(v_prev.values()) {
        let d = (wk - vk) / tau;
        if d != 0.0 {
            *dk += c * d.abs().powf(pv - 2.0);
        }
    }
    let top = diag.iter().copied().fold(0.0, f64::max);
    let floor = (top * DIAG_FLOOR_REL).max(f64::MIN_POSITIVE);
    diag.iter().map(|&d| 1.0 / d.max(floor)).collect()
}

fn weighted_dot(a: &[f64], wgt: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(wgt).zip(b).map(|((x, w), y)| x * w * y).sum()
}

/// Diagonally scaled BB gradient descent with Armijo backtracking. The
/// search direction is `-D⁻¹∇I`, `D` the diagonal of the Hessian of `I`,
/// which absorbs the node-to-node stiffness spread of `|Dw|^{p-2}` at large
/// `p`.
///
/// With `S = min(‖∇Φ(v_prev)‖_∞, T(x))`, `T(x)` the larger sup-norm of the
/// two terms of `∇I(x)`, the iteration stops once `‖∇I‖_∞` is below
/// [`INNER_MARGIN`]`·tol·S`, or below `tol·S` once rounding stalls further
/// progress toward that margin. All scales are homogeneous, so
/// the test is invariant under the rescaling. The `T(x)` part matters when
/// the step shrinks the data a lot: at large `p` the terms at the solution
/// can be many orders of magnitude below `∇Φ(v_prev)`.
fn minimize_step(
    v_prev: &GridFunction,
    start: GridFunction,
    cfg: &StepConfig,
    p: PExponent,
) -> Result<(GridFunction, usize)> {
    let tau = cfg.tau;
    let g_ref = energy_gradient(v_prev, p).sup_norm();
    if g_ref == 0.0 {
        return Ok((v_prev.clone(), 0));
    }
    let tol = cfg.tol_inner;

    let mut x = start;
    let (mut f, mut g, mut terms) = evaluate(&x, v_prev, tau, p);
    if !f.is_finite() {
        return Err(Error::NaN("step functional"));
    }
    let mut inv = inverse_diagonal(&x, v_prev, tau, p);
    // With an exact diagonal the scaled step is Newton-like, so 1 is natural.
    let mut alpha = 1.0;
    let mut use_bb1 = true;
    let mut best = f64::INFINITY;
    let mut best_iter = 0;

    for iter in 0..cfg.max_inner_iters {
        let gnorm = g.sup_norm();
        if !gnorm.is_finite() {
            return Err(Error::NaN("step gradient"));
        }
        let s_ref = g_ref.min(terms);
        if gnorm < 0.5 * best {
            best = gnorm;
            best_iter = iter;
        }
        let stalled = iter - best_iter >= STALL_ITERS;
        if gnorm <= INNER_MARGIN * tol * s_ref || (stalled && gnorm <= tol * s_ref) {
            return Ok((x, iter));
        }
        let dir: Vec<f64> = g.values().iter().zip(&inv).map(|(a, b)| a * b).collect();
        let dir = GridFunction::from_raw(x.grid(), dir);
        let gd = g.dot(&dir);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = x.add_scaled(-alpha, &dir)?;
            let (ft, gt, tt) = evaluate(&trial, v_prev, tau, p);
            if ft.is_finite() {
                let decrease = ARMIJO_C1 * alpha * gd;
                let ok = if (f - ft).abs() <= ROUNDOFF_REL * f.abs() {
                    0.5 * alpha * (gd + gt.dot(&dir)) >= decrease
                } else {
                    ft <= f - decrease
                };
                if ok {
                    accepted = Some((trial, ft, gt, tt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new, t_new)) = accepted else {
            log::debug!("line search stalled at inner iteration {iter}");
            return Err(Error::InnerNotConverged {
                iters: iter,
                residual: gnorm / g_ref.max(1.0),
            });
        };
        // s = -alpha dir, y = g_new - g; BB steps in the metric of the new diagonal
        let s = x_new.sub(&x)?;
        let y = g_new.sub(&g)?;
        inv = inverse_diagonal(&x_new, v_prev, tau, p);
        let sy = s.dot(&y);
        x = x_new;
        f = f_new;
        g = g_new;
        terms = t_new;
        alpha = if sy > 0.0 {
            let bb = if use_bb1 {
                let sds: f64 = s.values().iter().zip(&inv).map(|(a, b)| a * a / b).sum();
                sds / sy
            } else {
                sy / weighted_dot(y.values(), &inv, y.values())
            };
            use_bb1 = !use_bb1;
            bb
        } else {
            2.0 * alpha
        };
    }
    let residual = g.sup_norm() / g_ref.max(1.0);
    Err(Error::InnerNotConverged {
        iters: cfg.max_inner_iters,
        residual,
    })
}
