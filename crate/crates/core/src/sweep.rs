//! Ground states over a list of exponents, tracking `λ_p^{1/p}` as `p`
//! grows. On the interval and the square the limit is `1 / inradius`, a
//! value taken from the literature on the infinity eigenvalue problem; it is
//! reported as a reference and never computed by the solver.

use crate::error::Result;
use crate::flow::{extract_ground_state, run_flow, FlowConfig};
use crate::grid::GridFunction;
use crate::pcalc::PExponent;
use crate::step::StepConfig;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub p: f64,
    pub lambda_p: f64,
    /// `λ_p^{1/p}`.
    pub lambda_root: f64,
    pub mu_p: f64,
    pub converged: bool,
    pub steps: usize,
    pub error: Option<String>,
    pub psi: Option<GridFunction>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by `p`.
    pub rows: Vec<SweepRow>,
    /// `1 / inradius` of the domain (literature value of the limit).
    pub reference_limit: f64,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "p,lambda_p,lambda_root,mu_p,steps";

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.p, r.lambda_p, r.lambda_root, r.mu_p, r.steps
            ));
        }
        out
    }
}

/// Runs the flow to convergence for each `p` (ascending), warm-starting each
/// run from the previous converged ground state. A failed row is recorded
/// and the sweep continues from the last good state.
pub fn run_sweep(g: &GridFunction, p_list: &[f64], cfg: &FlowConfig, step_cfg: &StepConfig) -> Result<SweepResult> {
    let mut ps: Vec<f64> = p_list.to_vec();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let reference_limit = 1.0 / g.grid().inradius();
    let mut start = g.clone();
    let mut rows = Vec::with_capacity(ps.len());
    for pv in ps {
        let row = match PExponent::new(pv).and_then(|p| {
            let traj = run_flow(&start, p, cfg, step_cfg)?;
            let gs = extract_ground_state(&traj, p, cfg)?;
            Ok((traj.steps, gs))
        }) {
            Ok((steps, gs)) if !gs.degenerate_zero => {
                start = gs.psi.clone();
                log::info!("sweep p={pv}: lambda_p={:.6e} after {steps} steps", gs.lambda_p);
                SweepRow {
                    p: pv,
                    lambda_p: gs.lambda_p,
                    lambda_root: gs.lambda_p.powf(1.0 / pv),
                    mu_p: gs.mu_p,
                    converged: true,
                    steps,
                    error: None,
                    psi: Some(gs.psi),
                }
            }
            Ok((steps, _)) => failed_row(pv, steps, "initial data is degenerate (zero)".into()),
            Err(e) => {
                log::warn!("sweep p={pv} failed: {e}");
                failed_row(pv, 0, e.to_string())
            }
        };
        rows.push(row);
    }
    Ok(SweepResult { rows, reference_limit })
}

fn failed_row(p: f64, steps: usize, error: String) -> SweepRow {
    SweepRow {
        p,
        lambda_p: f64::NAN,
        lambda_root: f64::NAN,
        mu_p: f64::NAN,
        converged: false,
        steps,
        error: Some(error),
        psi: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::oracle::smallest_eigenvalue_closed_form;

    #[test]
    fn rows_are_sorted_and_warm_started() {
        let grid = Grid::interval(1.0, 31).unwrap();
        let g = GridFunction::from_fn(&grid, |x, _| (std::f64::consts::PI * x).sin()).unwrap();
        let cfg = FlowConfig::until_converged(0.1, 500).unwrap();
        let res = run_sweep(&g, &[4.0, 2.0, 3.0, 2.0], &cfg, &StepConfig::new(0.1).unwrap()).unwrap();
        let ps: Vec<f64> = res.rows.iter().map(|r| r.p).collect();
        assert_eq!(ps, vec![2.0, 3.0, 4.0]);
        assert!(res.rows.iter().all(|r| r.converged && r.lambda_p > 0.0));
        let lam = smallest_eigenvalue_closed_form(&grid).unwrap();
        assert!((res.rows[0].lambda_p - lam).abs() < 1e-8 * lam);
        assert!((res.rows[0].lambda_root - lam.sqrt()).abs() < 1e-8);
        assert!((res.reference_limit - 2.0).abs() < 1e-12);
        let csv = res.csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with(SweepResult::CSV_HEADER));
    }

    #[test]
    fn zero_data_gives_failed_rows() {
        let grid = Grid::interval(1.0, 7).unwrap();
        let cfg = FlowConfig::until_converged(0.1, 50).unwrap();
        let res = run_sweep(&GridFunction::zeros(&grid), &[2.0, 3.0], &cfg, &StepConfig::new(0.1).unwrap()).unwrap();
        assert!(res.rows.iter().all(|r| !r.converged && r.error.is_some() && r.lambda_p.is_nan()));
    }
}
