use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plapflow::checks::{trajectory_checks, Check};
use plapflow::flow::{estimate_rates, FlowTrajectory, GroundStateResult};
use plapflow::oracle::heat_flow_exact;
use plapflow::pcalc::{dirichlet_energy, energy_gradient};
use plapflow::snapshot::write_snapshot;
use plapflow::step::implicit_step_from;
use plapflow::sweep::run_sweep;
use plapflow::{extract_ground_state, implicit_step, run_flow, FlowConfig, GridFunction, PExponent, StepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::CliError;

/// `key = value` lines, printed and written to `summary.txt`.
#[derive(Default)]
struct Summary(String);

impl Summary {
    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key} = {value}");
    }

    fn checks(&mut self, checks: &[Check]) -> usize {
        let failed = checks.iter().filter(|c| !c.ok()).count();
        self.line("checks_passed", checks.len() - failed);
        self.line("checks_failed", failed);
        for c in checks {
            let kind = if c.asserted { "asserted" } else { "diagnostic" };
            let status = if c.passed { "pass" } else { "fail" };
            self.line(&format!("check.{}", c.name), format_args!("{status} ({kind}) {}", c.detail));
        }
        failed
    }

    fn finish(self, dir: &Path) -> Result<(), CliError> {
        print!("{}", self.0);
        fs::write(dir.join("summary.txt"), self.0)?;
        Ok(())
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn initial_data(cfg: &RunConfig) -> Result<GridFunction, CliError> {
    cfg.init.build(&cfg.grid, cfg.seed, cfg.init_scale)
}

fn final_time(traj: &FlowTrajectory) -> f64 {
    traj.steps as f64 * traj.tau()
}

fn write_trajectory(traj: &FlowTrajectory, dir: &Path) -> Result<(), CliError> {
    fs::write(dir.join("timeseries.csv"), traj.csv())?;
    let snap = write_snapshot(&traj.final_state(), traj.p.value(), final_time(traj));
    fs::write(dir.join("snapshot_final.csv"), snap)?;
    Ok(())
}

fn rates_lines(summary: &mut Summary, traj: &FlowTrajectory) {
    match estimate_rates(traj, traj.p) {
        Ok(r) => {
            summary.line("mu_hat", format_args!("{:.12e}", r.mu_hat));
            summary.line("consistency", format_args!("{:.6e}", r.consistency));
        }
        Err(e) => summary.line("mu_hat", format_args!("n/a ({e})")),
    }
}

pub fn flow(cfg: &RunConfig) -> Result<(), CliError> {
    let g = initial_data(cfg)?;
    let mut flow_cfg = cfg.flow;
    flow_cfg.keep_states = cfg.snapshot_every > 0;
    let traj = run_flow(&g, cfg.p, &flow_cfg, &cfg.solver)?;
    prepare_dir(&cfg.out_dir)?;
    write_trajectory(&traj, &cfg.out_dir)?;
    if cfg.snapshot_every > 0 {
        let snaps = cfg.out_dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        for (rec, state) in traj.records.iter().zip(&traj.states) {
            if rec.k % cfg.snapshot_every == 0 {
                let text = write_snapshot(state, cfg.p.value(), rec.t);
                fs::write(snaps.join(format!("snapshot_{:06}.csv", rec.k)), text)?;
            }
        }
    }

    let mut s = Summary::default();
    s.line("command", "flow");
    s.line("p", cfg.p);
    s.line("tau", format_args!("{:e}", traj.tau()));
    s.line("steps", traj.steps);
    s.line("termination", format_args!("{:?}", traj.termination));
    s.line("degenerate_zero", traj.degenerate_zero());
    s.line("lambda_hat", format_args!("{:.12}", traj.last().lambda_hat));
    rates_lines(&mut s, &traj);
    let failed = s.checks(&trajectory_checks(&traj, &g, cfg.p));
    s.finish(&cfg.out_dir)?;
    if failed > 0 {
        return Err(CliError::Invariant(failed));
    }
    Ok(())
}

fn converging(cfg: &RunConfig) -> FlowConfig {
    FlowConfig {
        stop_on_convergence: true,
        ..cfg.flow
    }
}

fn ground_state_lines(s: &mut Summary, gs: &GroundStateResult, p: PExponent) {
    s.line("converged", gs.converged);
    s.line("degenerate_zero", gs.degenerate_zero);
    s.line("steps_used", gs.steps_used);
    s.line("lambda_p", format_args!("{:.12e}", gs.lambda_p));
    s.line("mu_p", format_args!("{:.12e}", gs.mu_p));
    s.line("lambda_root", format_args!("{:.12}", gs.lambda_p.powf(1.0 / p.value())));
    s.line("ground_state_residual", format_args!("{:.3e}", gs.residual(p)));
}

pub fn groundstate(cfg: &RunConfig) -> Result<(), CliError> {
    let g = initial_data(cfg)?;
    let flow_cfg = converging(cfg);
    let traj = run_flow(&g, cfg.p, &flow_cfg, &cfg.solver)?;
    prepare_dir(&cfg.out_dir)?;
    write_trajectory(&traj, &cfg.out_dir)?;
    let gs = match extract_ground_state(&traj, cfg.p, &flow_cfg) {
        Ok(gs) => gs,
        Err(e) => {
            log::error!("no ground state after {} steps; partial artifacts written", traj.steps);
            return Err(e.into());
        }
    };
    fs::write(
        cfg.out_dir.join("psi.csv"),
        write_snapshot(&gs.psi, cfg.p.value(), final_time(&traj)),
    )?;
    let mut s = Summary::default();
    s.line("command", "groundstate");
    s.line("p", cfg.p);
    s.line("tau", format_args!("{:e}", traj.tau()));
    ground_state_lines(&mut s, &gs, cfg.p);
    rates_lines(&mut s, &traj);
    let failed = s.checks(&trajectory_checks(&traj, &g, cfg.p));
    s.finish(&cfg.out_dir)?;
    if failed > 0 {
        return Err(CliError::Invariant(failed));
    }
    Ok(())
}

pub fn parse_p_list(text: &str) -> Result<Vec<f64>, CliError> {
    let ps: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("--p-list: cannot parse '{}'", t.trim())))
        })
        .collect::<Result<_, _>>()?;
    for &p in &ps {
        PExponent::new(p).map_err(|e| CliError::Config(format!("--p-list: {e}")))?;
    }
    Ok(ps)
}

pub fn sweep(cfg: &RunConfig, p_list: &[f64]) -> Result<(), CliError> {
    let g = initial_data(cfg)?;
    let res = run_sweep(&g, p_list, &converging(cfg), &cfg.solver)?;
    prepare_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("sweep.csv"), res.csv())?;
    let mut s = Summary::default();
    s.line("command", "sweep");
    s.line(
        "reference_limit",
        format_args!(
            "{:.12} (1/inradius; literature value for the limit of lambda_p^(1/p), not computed here)",
            res.reference_limit
        ),
    );
    let mut failed = 0;
    for row in &res.rows {
        let key = format!("row.p{}", row.p);
        match (&row.psi, &row.error) {
            (Some(psi), _) => {
                let file = format!("psi_p{}.csv", row.p);
                fs::write(cfg.out_dir.join(&file), write_snapshot(psi, row.p, 0.0))?;
                s.line(
                    &key,
                    format_args!(
                        "lambda_p {:.12e}, lambda_root {:.12}, distance to reference {:.6}, steps {}, {file}",
                        row.lambda_p,
                        row.lambda_root,
                        (row.lambda_root - res.reference_limit).abs(),
                        row.steps
                    ),
                );
            }
            (None, err) => {
                failed += 1;
                s.line(&key, format_args!("failed: {}", err.as_deref().unwrap_or("unknown")));
            }
        }
    }
    s.finish(&cfg.out_dir)?;
    if failed > 0 {
        return Err(CliError::Solver(plapflow::Error::NotConverged));
    }
    Ok(())
}

fn row(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        asserted: true,
        detail,
    }
}

/// Number of random instances exercised by `check`.
const RANDOM_INSTANCES: u64 = 3;
/// Steps per randomized flow in `check`.
const CHECK_STEPS: usize = 30;

fn random_fn(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<GridFunction, CliError> {
    Ok(GridFunction::from_fn(&cfg.grid, |_, _| rng.gen_range(-1.0..=1.0))?)
}

fn check_suites(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let p = cfg.p;
    let tol = cfg.solver.tol_inner;
    let tau = cfg.stepping.tau;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();

    // Configured problem.
    let g = initial_data(cfg)?;
    let traj = run_flow(&g, p, &cfg.flow, &cfg.solver)?;
    for mut c in trajectory_checks(&traj, &g, p) {
        c.name = format!("configured/{}", c.name);
        rows.push(c);
    }

    // Randomized flows on the configured grid.
    let short = FlowConfig {
        max_steps: cfg.stepping.steps.min(CHECK_STEPS),
        stop_on_convergence: false,
        ..cfg.flow
    };
    for i in 0..RANDOM_INSTANCES {
        let g = random_fn(cfg, &mut rng)?;
        let traj = run_flow(&g, p, &short, &cfg.solver)?;
        let checks = trajectory_checks(&traj, &g, p);
        let bad: Vec<&str> = checks.iter().filter(|c| !c.ok()).map(|c| c.name.as_str()).collect();
        let asserted = checks.iter().filter(|c| c.asserted).count();
        let detail = if bad.is_empty() {
            format!("{asserted} asserted checks over {} steps", traj.steps)
        } else {
            format!("failed: {}", bad.join(", "))
        };
        rows.push(row(&format!("random#{i}/flow_invariants"), bad.is_empty(), detail));
    }

    // Discrete calculus.
    let u = random_fn(cfg, &mut rng)?;
    let dir = random_fn(cfg, &mut rng)?;
    let eps = 1e-5;
    let fd = (dirichlet_energy(&u.add_scaled(eps, &dir)?, p) - dirichlet_energy(&u.add_scaled(-eps, &dir)?, p))
        / (2.0 * eps);
    let exact = energy_gradient(&u, p).dot(&dir);
    let rel = (fd - exact).abs() / exact.abs().max(1e-300);
    rows.push(row("pcalc/gradient_vs_central_difference", rel <= 1e-6, format!("relative gap {rel:.2e}")));
    let c = 2.5;
    let hom = (dirichlet_energy(&u.scaled(c), p) / (c.powf(p.value()) * dirichlet_energy(&u, p)) - 1.0).abs();
    rows.push(row("pcalc/energy_homogeneity", hom <= 1e-12, format!("relative gap {hom:.2e}")));

    // One implicit step.
    let step_cfg = StepConfig { tau, ..cfg.solver };
    let a = implicit_step(&u, &step_cfg, p)?;
    let b = implicit_step_from(&u, &u.scaled(0.5), &step_cfg, p)?;
    let gap = a.v_new.sub(&b.v_new)?.sup_norm() / a.v_new.sup_norm().max(f64::MIN_POSITIVE);
    rows.push(row(
        "step/unique_minimizer",
        gap <= 10.0 * tol,
        format!("two starts differ by {gap:.2e} (limit {:.1e})", 10.0 * tol),
    ));
    let phi_prev = dirichlet_energy(&u, p);
    let excess = a.dissipation + dirichlet_energy(&a.v_new, p) - phi_prev;
    let slack = 1e-9 * phi_prev.max(1.0);
    rows.push(row("step/energy_inequality", excess <= slack, format!("excess {excess:.2e} (slack {slack:.1e})")));
    rows.push(row(
        "step/residual",
        a.residual <= tol,
        format!("relative gradient {:.2e} (tol {tol:.1e})", a.residual),
    ));

    // Spectral oracle at p = 2.
    if !cfg.grid.is_masked() {
        let p2 = PExponent::new(2.0)?;
        let steps = cfg.stepping.steps.min(CHECK_STEPS);
        let mut lin = FlowConfig::horizon(tau * steps as f64, steps)?;
        lin.tau = tau;
        lin.keep_states = true;
        let traj = run_flow(&u, p2, &lin, &cfg.solver)?;
        let mut worst: f64 = 0.0;
        for (k, v) in traj.states.iter().enumerate() {
            let exact = heat_flow_exact(&u, tau, k)?;
            worst = worst.max(v.sub(&exact)?.sup_norm() / exact.sup_norm());
        }
        rows.push(row(
            "oracle/p2_matches_exact_scheme",
            worst <= 100.0 * tol,
            format!("relative sup gap {worst:.2e} (limit {:.1e})", 100.0 * tol),
        ));
    }

    // Scale equivariance.
    let mut eq = short;
    eq.keep_states = true;
    eq.max_steps = eq.max_steps.min(10);
    let base = run_flow(&u, p, &eq, &cfg.solver)?;
    let scaled = run_flow(&u.scaled(c), p, &eq, &cfg.solver)?;
    let mut worst: f64 = 0.0;
    for (x, y) in base.states.iter().zip(&scaled.states) {
        worst = worst.max(y.sub(&x.scaled(c))?.sup_norm() / (c * x.sup_norm()).max(f64::MIN_POSITIVE));
    }
    rows.push(row("flow/scale_equivariance", worst <= 1e-8, format!("relative gap {worst:.2e}")));
    Ok(rows)
}

pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let rows = check_suites(cfg)?;
    let mut table = String::new();
    for c in &rows {
        let status = match (c.passed, c.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        let _ = writeln!(table, "{status}  {:<44} {}", c.name, c.detail);
    }
    let failed = rows.iter().filter(|c| !c.ok()).count();
    let _ = writeln!(table, "{} checks, {failed} asserted failures", rows.len());
    print!("{table}");
    prepare_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("check.txt"), table)?;
    if failed > 0 {
        return Err(CliError::Invariant(failed));
    }
    Ok(())
}
