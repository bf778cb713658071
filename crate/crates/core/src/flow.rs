//! Time stepping of the implicit scheme from `v⁰ = g`, the diagnostics it
//! carries, and extraction of the decay rate, the least Rayleigh quotient
//! and the ground state from the large-time behaviour.
//!
//! Internally the iterate is stored as a unit-sup-norm shape times
//! `exp(log_scale)`. The scheme is homogeneous, so this is exact, and it
//! keeps `∫|v|^p` meaningful for large `p` and long runs where the plain
//! value would underflow.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::pcalc::{dirichlet_energy, energy_gradient, rayleigh, PExponent};
use crate::step::{implicit_step, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    /// Time step `τ = T / N`.
    pub tau: f64,
    pub max_steps: usize,
    /// Stop early once the convergence criterion holds. Fixed-horizon runs
    /// leave this off and take exactly `max_steps` steps.
    pub stop_on_convergence: bool,
    /// Tolerance on the relative Rayleigh change per unit time and on the
    /// per-unit-time motion of the normalized iterate.
    pub stop_tol: f64,
    pub stop_window: usize,
    /// Rescaled mass `∫|v|^p · e^{pμ̂t}` below this is treated as zero.
    pub zero_threshold: f64,
    pub record_every: usize,
    /// Keep a copy of `v^k` for every recorded step.
    pub keep_states: bool,
}

impl FlowConfig {
    // No convergence rate is known for the rescaled flow, so these defaults
    // are tuned by experiment rather than derived.
    pub const DEFAULT_STOP_TOL: f64 = 1e-8;
    pub const DEFAULT_STOP_WINDOW: usize = 10;
    pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-13;

    /// `N` steps of size `T / N`.
    pub fn horizon(total_time: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("number of steps N must be at least 1".into()));
        }
        let cfg = FlowConfig {
            tau: total_time / steps as f64,
            max_steps: steps,
            stop_on_convergence: false,
            ..Self::base()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Steps of size `tau` until converged, at most `max_steps`.
    pub fn until_converged(tau: f64, max_steps: usize) -> Result<Self> {
        let cfg = FlowConfig {
            tau,
            max_steps,
            stop_on_convergence: true,
            ..Self::base()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn base() -> Self {
        FlowConfig {
            tau: 1.0,
            max_steps: 1,
            stop_on_convergence: true,
            stop_tol: Self::DEFAULT_STOP_TOL,
            stop_window: Self::DEFAULT_STOP_WINDOW,
            zero_threshold: Self::DEFAULT_ZERO_THRESHOLD,
            record_every: 1,
            keep_states: false,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.tau * self.max_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("time step must be positive and finite, got {}", self.tau));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.stop_tol > 0.0 && self.stop_tol.is_finite()) {
            return bad(format!("stop_tol must be positive, got {}", self.stop_tol));
        }
        if !(self.zero_threshold > 0.0 && self.zero_threshold.is_finite()) {
            return bad(format!("zero_threshold must be positive, got {}", self.zero_threshold));
        }
        if self.stop_window == 0 || self.record_every == 0 {
            return bad("stop_window and record_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Diagnostics of one recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub k: usize,
    pub t: f64,
    /// `∫ |v^k|^p`.
    pub mass: f64,
    /// `Φ(v^k)`.
    pub energy: f64,
    pub rayleigh: f64,
    /// `Σ_{j<=k} ∫ |v^j - v^{j-1}|^p / τ^{p-1}`.
    pub dissipation_cum: f64,
    pub lambda_hat: f64,
    /// `lambda_hat^{1/(p-1)}`.
    pub mu_hat: f64,
    /// `exp(p·mu_hat·t) · p·Φ(v^k)`.
    pub rescaled_energy: f64,
    /// `‖(v^k - v^{k-1}) / τ‖_∞`, zero at `k = 0`.
    pub vt_sup: f64,
    /// `∫ |(v^k - v^{k-1}) / τ|^p`, zero at `k = 0`.
    pub vt_mass: f64,
    /// `ln ∫|v^k|^p`, finite even where `mass` underflows.
    pub log_mass: f64,
    /// `ln Φ(v^k)`.
    pub log_energy: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "k,t,mass,energy,rayleigh,lambda_hat,mu_hat,rescaled_energy,dissipation_cum,vt_sup";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.k,
            self.t,
            self.mass,
            self.energy,
            self.rayleigh,
            self.lambda_hat,
            self.mu_hat,
            self.rescaled_energy,
            self.dissipation_cum,
            self.vt_sup
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Stop criterion satisfied.
    Converged,
    /// The rescaled mass vanished.
    DegenerateZero,
    /// Fixed horizon reached.
    Horizon,
    /// `max_steps` exhausted without convergence.
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub p: PExponent,
    pub config: FlowConfig,
    pub records: Vec<DiagnosticsRecord>,
    /// `v^k` per record when [`FlowConfig::keep_states`] is set.
    pub states: Vec<GridFunction>,
    pub termination: Termination,
    pub steps: usize,
    /// `max_k ∫ |v^k - v^{k-1}|^p` over all steps taken.
    pub max_step_gap: f64,
    /// Largest inner iteration count of any step.
    pub max_inner_iters: usize,
    shape: GridFunction,
    log_scale: f64,
}

impl FlowTrajectory {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn degenerate_zero(&self) -> bool {
        self.termination == Termination::DegenerateZero
    }

    pub fn tau(&self) -> f64 {
        self.config.tau
    }

    pub fn last(&self) -> &DiagnosticsRecord {
        self.records.last().expect("trajectory always holds the initial record")
    }

    /// The last iterate `v^k` (may underflow to zero after very long runs).
    pub fn final_state(&self) -> GridFunction {
        self.shape.scaled(self.log_scale.exp())
    }

    /// The last iterate rescaled to unit sup norm, or zero.
    pub fn final_shape(&self) -> &GridFunction {
        &self.shape
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(DiagnosticsRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

struct Recorder<'a> {
    p: PExponent,
    cfg: &'a FlowConfig,
    records: Vec<DiagnosticsRecord>,
    states: Vec<GridFunction>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        k: usize,
        shape: &GridFunction,
        log_scale: f64,
        rayleigh_q: f64,
        dissipation_cum: f64,
        vt_sup: f64,
        vt_mass: f64,
    ) {
        let pv = self.p.value();
        let t = k as f64 * self.cfg.tau;
        let (log_mass, log_energy) = if shape.is_zero() {
            (f64::NEG_INFINITY, f64::NEG_INFINITY)
        } else {
            (
                pv * log_scale + shape.lp_mass(self.p).ln(),
                pv * log_scale + dirichlet_energy(shape, self.p).ln(),
            )
        };
        let mu_hat = if rayleigh_q > 0.0 {
            rayleigh_q.powf(1.0 / (pv - 1.0))
        } else {
            0.0
        };
        self.records.push(DiagnosticsRecord {
            k,
            t,
            mass: log_mass.exp(),
            energy: log_energy.exp(),
            rayleigh: rayleigh_q,
            dissipation_cum,
            lambda_hat: rayleigh_q,
            mu_hat,
            rescaled_energy: (pv * mu_hat * t + pv.ln() + log_energy).exp(),
            vt_sup,
            vt_mass,
            log_mass,
            log_energy,
        });
        if self.cfg.keep_states {
            self.states.push(shape.scaled(log_scale.exp()));
        }
    }
}

/// Iterates [`implicit_step`] from `v⁰ = g`.
///
/// The time step is taken from `cfg.tau`; the `tau` field of `step_cfg` is
/// ignored and only its solver settings are used.
pub fn run_flow(g: &GridFunction, p: PExponent, cfg: &FlowConfig, step_cfg: &StepConfig) -> Result<FlowTrajectory> {
    cfg.validate()?;
    let step_cfg = StepConfig {
        tau: cfg.tau,
        ..*step_cfg
    };
    step_cfg.validate()?;
    let pv = p.value();
    let tau = cfg.tau;
    let mut rec = Recorder {
        p,
        cfg,
        records: Vec::new(),
        states: Vec::new(),
    };

    let sup0 = g.sup_norm();
    if sup0 == 0.0 {
        rec.push(0, g, 0.0, 0.0, 0.0, 0.0, 0.0);
        return Ok(FlowTrajectory {
            p,
            config: *cfg,
            records: rec.records,
            states: rec.states,
            termination: Termination::DegenerateZero,
            steps: 0,
            max_step_gap: 0.0,
            max_inner_iters: 0,
            shape: g.clone(),
            log_scale: 0.0,
        });
    }

    let mut shape = g.scaled(1.0 / sup0);
    let mut log_scale = sup0.ln();
    let mut r_prev = rayleigh(&shape, p)?;
    rec.push(0, &shape, log_scale, r_prev, 0.0, 0.0, 0.0);

    let ln_zero = cfg.zero_threshold.ln();
    let rescaled_log_mass = |log_mass: f64, r: f64, t: f64| log_mass + pv * r.powf(1.0 / (pv - 1.0)) * t;
    let mut zero_run = usize::from(rescaled_log_mass(rec.records[0].log_mass, r_prev, 0.0) < ln_zero);
    let mut calm_run = 0usize;
    let mut dissipation_cum = 0.0;
    let mut max_step_gap: f64 = 0.0;
    let mut max_inner_iters = 0;
    let mut termination = if cfg.stop_on_convergence {
        Termination::MaxSteps
    } else {
        Termination::Horizon
    };
    let mut steps = 0;

    if zero_run >= cfg.stop_window {
        termination = Termination::DegenerateZero;
    } else {
        for k in 1..=cfg.max_steps {
            let step = implicit_step(&shape, &step_cfg, p)?;
            max_inner_iters = max_inner_iters.max(step.inner_iters);
            let raw = step.v_new;
            let s = raw.sup_norm();
            let diff = raw.sub(&shape)?;
            let factor = (pv * log_scale).exp();
            dissipation_cum += step.dissipation * factor;
            max_step_gap = max_step_gap.max(diff.lp_mass(p) * factor);
            let vt_sup = diff.sup_norm() / tau * log_scale.exp();
            let vt_mass = diff.scaled(1.0 / tau).lp_mass(p) * factor;
            steps = k;
            if s == 0.0 {
                shape = raw;
                rec.push(k, &shape, 0.0, 0.0, dissipation_cum, vt_sup, vt_mass);
                termination = Termination::DegenerateZero;
                break;
            }
            // Motion of the L^p-normalized iterate.
            let drift = raw
                .scaled(1.0 / raw.lp_norm(p))
                .sub(&shape.scaled(1.0 / shape.lp_norm(p)))?
                .lp_norm(p);
            shape = raw.scaled(1.0 / s);
            log_scale += s.ln();
            let r = rayleigh(&shape, p)?;
            if !r.is_finite() || !dissipation_cum.is_finite() {
                return Err(Error::NaN("flow diagnostics"));
            }

            let rate = (r - r_prev).abs() / (r * tau);
            if rate < cfg.stop_tol && drift <= cfg.stop_tol * tau {
                calm_run += 1;
            } else {
                calm_run = 0;
            }
            let log_mass = pv * log_scale + shape.lp_mass(p).ln();
            if rescaled_log_mass(log_mass, r, k as f64 * tau) < ln_zero {
                zero_run += 1;
            } else {
                zero_run = 0;
            }
            r_prev = r;

            let done = if zero_run >= cfg.stop_window {
                termination = Termination::DegenerateZero;
                true
            } else if cfg.stop_on_convergence && calm_run >= cfg.stop_window {
                termination = Termination::Converged;
                true
            } else {
                k == cfg.max_steps
            };
            if done || k % cfg.record_every == 0 {
                rec.push(k, &shape, log_scale, r, dissipation_cum, vt_sup, vt_mass);
            }
            if done {
                break;
            }
        }
    }
    log::debug!(
        "flow p={} tau={} finished after {} steps ({:?})",
        pv,
        tau,
        steps,
        termination
    );
    Ok(FlowTrajectory {
        p,
        config: *cfg,
        records: rec.records,
        states: rec.states,
        termination,
        steps,
        max_step_gap,
        max_inner_iters,
        shape,
        log_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Last Rayleigh quotient.
    pub lambda_hat: f64,
    /// Decay rate from the mass, `-(1/(p Δt)) ln(m_k / m_{k-1})`, averaged
    /// over the trailing window.
    pub mu_hat: f64,
    /// `|mu_hat - lambda_hat^{1/(p-1)}| / mu_hat`.
    pub consistency: f64,
}

pub fn estimate_rates(traj: &FlowTrajectory, p: PExponent) -> Result<RateEstimate> {
    if traj.degenerate_zero() {
        return Err(Error::DegenerateMass);
    }
    let window = traj.config.stop_window;
    let recs = &traj.records;
    if recs.len() < window + 1 {
        return Err(Error::TrajectoryTooShort {
            needed: window + 1,
            have: recs.len(),
        });
    }
    let pv = p.value();
    let tail = &recs[recs.len() - window - 1..];
    let mu_hat = tail
        .windows(2)
        .map(|w| -(w[1].log_mass - w[0].log_mass) / (pv * (w[1].t - w[0].t)))
        .sum::<f64>()
        / window as f64;
    let lambda_hat = traj.last().rayleigh;
    let consistency = (mu_hat - lambda_hat.powf(1.0 / (pv - 1.0))).abs() / mu_hat;
    Ok(RateEstimate {
        lambda_hat,
        mu_hat,
        consistency,
    })
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    /// Unit `L^p` mass, positive at its node of largest magnitude.
    pub psi: GridFunction,
    pub lambda_p: f64,
    /// `lambda_p^{1/(p-1)}`.
    pub mu_p: f64,
    pub converged: bool,
    pub degenerate_zero: bool,
    pub steps_used: usize,
}

impl GroundStateResult {
    /// Relative sup-norm residual of `-Δ_p ψ = λ |ψ|^{p-2} ψ`.
    pub fn residual(&self, p: PExponent) -> f64 {
        if self.degenerate_zero {
            return 0.0;
        }
        ground_state_residual(&self.psi, self.lambda_p, p)
    }
}

/// `‖∇Φ(ψ) - λ·vol·J_p(ψ)‖_∞ / ‖∇Φ(ψ)‖_∞`.
pub fn ground_state_residual(psi: &GridFunction, lambda: f64, p: PExponent) -> f64 {
    let grad = energy_gradient(psi, p);
    let vol = psi.grid().cell_volume();
    let scale = grad.sup_norm();
    if scale == 0.0 {
        return 0.0;
    }
    grad.values()
        .iter()
        .zip(psi.values())
        .map(|(g, &u)| (g - lambda * vol * crate::pcalc::jp(u, p)).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn extract_ground_state(traj: &FlowTrajectory, p: PExponent, _cfg: &FlowConfig) -> Result<GroundStateResult> {
    if traj.degenerate_zero() {
        return Ok(GroundStateResult {
            psi: GridFunction::zeros(traj.shape.grid()),
            lambda_p: 0.0,
            mu_p: 0.0,
            converged: false,
            degenerate_zero: true,
            steps_used: traj.steps,
        });
    }
    if !traj.converged() {
        return Err(Error::NotConverged);
    }
    let psi = traj.shape.normalized(p).ok_or(Error::ZeroFunction)?;
    let lambda_p = rayleigh(&psi, p)?;
    Ok(GroundStateResult {
        psi,
        lambda_p,
        mu_p: lambda_p.powf(1.0 / (p.value() - 1.0)),
        converged: true,
        degenerate_zero: false,
        steps_used: traj.steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    /// `max_k ‖v^k - c_k ψ‖_∞ / ‖v^k‖_∞` with `c_k = (∫|v^k|^p)^{1/p}`.
    pub max_sup_deviation: f64,
    /// `max_k ‖v^k / ‖v^k‖_p - ψ‖_p`.
    pub max_lp_deviation: f64,
    pub rates: RateEstimate,
}

/// Runs `k_steps` steps from a computed ground state `psi` (unit mass, sign
/// fixed) and measures how far the iterates leave the ray through `psi`.
pub fn check_separation_of_variables(
    psi: &GridFunction,
    p: PExponent,
    tau: f64,
    k_steps: usize,
    step_cfg: &StepConfig,
) -> Result<SeparationReport> {
    let mut cfg = FlowConfig::horizon(tau * k_steps as f64, k_steps)?;
    cfg.tau = tau;
    cfg.keep_states = true;
    cfg.stop_window = cfg.stop_window.min(k_steps);
    let traj = run_flow(psi, p, &cfg, step_cfg)?;
    let mut max_sup: f64 = 0.0;
    let mut max_lp: f64 = 0.0;
    for v in &traj.states {
        let norm = v.lp_norm(p);
        if norm == 0.0 {
            return Err(Error::ZeroFunction);
        }
        let dev = v.sub(&psi.scaled(norm))?;
        max_sup = max_sup.max(dev.sup_norm() / v.sup_norm());
        max_lp = max_lp.max(v.scaled(1.0 / norm).sub(psi)?.lp_norm(p));
    }
    Ok(SeparationReport {
        max_sup_deviation: max_sup,
        max_lp_deviation: max_lp,
        rates: estimate_rates(&traj, p)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VtBound {
    /// `C` with `C^{p-1} = sup |Δ_p g|`.
    pub bound: f64,
    pub max_vt_sup: f64,
    pub holds: bool,
}

/// Compares the recorded `‖v_t‖_∞` with the bound `C` determined by
/// `|C|^{p-2} C = sup |Δ_p g|`.
pub fn check_vt_bound(traj: &FlowTrajectory, g: &GridFunction, p: PExponent) -> VtBound {
    let vol = g.grid().cell_volume();
    let bound = (energy_gradient(g, p).sup_norm() / vol).powf(1.0 / (p.value() - 1.0));
    let max_vt_sup = traj.records.iter().map(|r| r.vt_sup).fold(0.0, f64::max);
    let holds = traj.records.iter().all(|r| r.vt_sup <= bound * (1.0 + 1e-6));
    if !holds {
        log::warn!("time-derivative bound exceeded: max |v_t| = {max_vt_sup:e} > C = {bound:e}");
    }
    VtBound {
        bound,
        max_vt_sup,
        holds,
    }
}

/// `max_k ∫ |v^k - v^{k-1}|^p` over the steps of `traj`.
pub fn interpolant_gap(traj: &FlowTrajectory, _p: PExponent, _tau: f64) -> f64 {
    traj.max_step_gap
}

/// Upper bound `τ^{p-1} · ∫|Dg|^p` for [`interpolant_gap`].
pub fn interpolant_gap_bound(g: &GridFunction, p: PExponent, tau: f64) -> f64 {
    let pv = p.value();
    tau.powf(pv - 1.0) * pv * dirichlet_energy(g, p)
}

/// `sup_t (∫ |v_N(t) - v_{2N}(t)|^p)^{1/p}` for each `N` in `ns`, where
/// `v_N` is the piecewise-constant interpolant of the scheme on `[0, T]`
/// with `N` steps.
pub fn refinement_gaps(
    g: &GridFunction,
    p: PExponent,
    total_time: f64,
    ns: &[usize],
    step_cfg: &StepConfig,
) -> Result<Vec<f64>> {
    let mut cache: std::collections::HashMap<usize, Vec<GridFunction>> = Default::default();
    let mut states_for = |n: usize| -> Result<Vec<GridFunction>> {
        if let Some(s) = cache.get(&n) {
            return Ok(s.clone());
        }
        let mut cfg = FlowConfig::horizon(total_time, n)?;
        cfg.keep_states = true;
        let traj = run_flow(g, p, &cfg, step_cfg)?;
        if traj.states.len() != n + 1 {
            return Err(Error::DegenerateMass);
        }
        cache.insert(n, traj.states.clone());
        Ok(traj.states)
    };
    let mut gaps = Vec::with_capacity(ns.len());
    for &n in ns {
        let coarse = states_for(n)?;
        let fine = states_for(2 * n)?;
        let mut worst: f64 = 0.0;
        for (k, vf) in fine.iter().enumerate().skip(1) {
            let vc = &coarse[k.div_ceil(2)];
            worst = worst.max(vc.sub(vf)?.lp_norm(p));
        }
        gaps.push(worst);
    }
    Ok(gaps)
}
