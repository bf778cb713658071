use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plapflow::oracle::smallest_eigenvalue_closed_form;
use plapflow::snapshot::{parse_snapshot, write_mask, write_snapshot};
use plapflow::Grid;

fn plapflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plapflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Value of `key = value` in a summary file.
fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from summary:\n{text}"))
        .to_string()
}

fn summary_f64(dir: &Path, key: &str) -> f64 {
    summary_value(dir, key).split_whitespace().next().unwrap().parse().unwrap()
}

const SCALAR: &str = "\
# one interior node, closed-form decay 1.8^-k
domain.kind = interval
domain.lx = 1
domain.nx = 1
flow.p = 2
flow.tau = 0.1
flow.max_steps = 100
flow.stop_on_convergence = true
flow.init = sine:1
";

#[test]
fn scalar_demo() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("scalar.cfg"), SCALAR).unwrap();
    let out = plapflow(&["flow", "--config", "scalar.cfg", "--out", "run"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("run");
    assert_eq!(summary_value(&run, "lambda_hat"), "8.000000000000");
    assert!((summary_f64(&run, "lambda_hat") - 8.0).abs() <= 1e-9);
    assert_eq!(summary_value(&run, "checks_failed"), "0");
    let csv = fs::read_to_string(run.join("timeseries.csv")).unwrap();
    assert!(csv.starts_with("k,t,mass,energy,rayleigh,lambda_hat,mu_hat,rescaled_energy,dissipation_cum,vt_sup\n"));
}

#[test]
fn zero_data_is_flagged_not_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plapflow(
        &["flow", "--set", "flow.init=zero", "--set", "flow.N=10", "--set", "flow.T=1", "--out", "z"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(summary_value(&tmp.path().join("z"), "degenerate_zero"), "true");

    let out = plapflow(&["check", "--set", "flow.init=zero", "--set", "flow.tau=0.1", "--out", "c"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn first_mode_recovers_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let lam = smallest_eigenvalue_closed_form(&Grid::interval(1.0, 127).unwrap()).unwrap();
    let args = [
        "--set", "domain.nx=127", "--set", "flow.init=sine:1", "--set", "flow.N=20", "--set", "flow.T=1",
    ];
    let mut flow = vec!["flow", "--out", "f"];
    flow.extend_from_slice(&args);
    assert_eq!(code(&plapflow(&flow, tmp.path())), 0);
    assert!((summary_f64(&tmp.path().join("f"), "lambda_hat") - lam).abs() <= 1e-8);

    let mut gs = vec!["groundstate", "--out", "g"];
    gs.extend_from_slice(&args);
    assert_eq!(code(&plapflow(&gs, tmp.path())), 0);
    let g = tmp.path().join("g");
    assert!((summary_f64(&g, "lambda_p") - lam).abs() <= 1e-8);
    let psi = parse_snapshot(&fs::read_to_string(g.join("psi.csv")).unwrap(), None).unwrap();
    let sine = plapflow::GridFunction::from_fn(psi.function.grid(), |x, _| (std::f64::consts::PI * x).sin())
        .unwrap()
        .normalized(plapflow::PExponent::new(2.0).unwrap())
        .unwrap();
    assert!(psi.function.sub(&sine).unwrap().sup_norm() <= 1e-6);
}

#[test]
fn groundstate_sign_and_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plapflow(
        &["groundstate", "--set", "flow.init=mixture:-1,0.3", "--set", "flow.tau=0.1", "--out", "m"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let psi = parse_snapshot(&fs::read_to_string(tmp.path().join("m/psi.csv")).unwrap(), None).unwrap();
    assert!(psi.function.values().iter().all(|&v| v > 0.0));

    let out = plapflow(
        &["groundstate", "--set", "flow.p=3", "--set", "flow.tau=0.1", "--out", "b"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(summary_f64(&tmp.path().join("b"), "ground_state_residual") <= 1e-5);
}

#[test]
fn groundstate_without_convergence_exits_2_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plapflow(
        &["groundstate", "--set", "flow.p=3", "--set", "flow.tau=0.01", "--set", "flow.max_steps=3", "--out", "n"],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(tmp.path().join("n/timeseries.csv").exists());
    assert!(tmp.path().join("n/snapshot_final.csv").exists());
}

#[test]
fn snapshot_round_trip_and_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plapflow(
        &[
            "flow", "--set", "domain.kind=rectangle", "--set", "domain.nx=9", "--set", "domain.ny=7",
            "--set", "flow.init=random", "--set", "flow.N=5", "--set", "flow.T=0.05",
            "--set", "output.snapshot_every=2", "--out", "r",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let r = tmp.path().join("r");
    let text = fs::read_to_string(r.join("snapshot_final.csv")).unwrap();
    let snap = parse_snapshot(&text, None).unwrap();
    assert_eq!(write_snapshot(&snap.function, snap.p, snap.t), text);
    assert!(r.join("snapshots/snapshot_000000.csv").exists());
    assert!(r.join("snapshots/snapshot_000004.csv").exists());
    assert!(!r.join("snapshots/snapshot_000003.csv").exists());

    let out = plapflow(
        &[
            "flow", "--set", "domain.kind=rectangle", "--set", "domain.nx=9", "--set", "domain.ny=7",
            "--set", "flow.init=file:r/snapshot_final.csv", "--set", "flow.N=2", "--set", "flow.T=0.02",
            "--out", "r2",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = plapflow(
        &["flow", "--set", "flow.init=file:r/snapshot_final.csv", "--set", "flow.N=2", "--set", "flow.T=0.02"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1, "snapshot on a different grid must be rejected");
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, seed: &str| {
        let out = plapflow(
            &[
                "flow", "--set", "flow.p=3", "--set", "flow.init=random", "--set", "flow.N=20",
                "--set", "flow.T=0.2", "--seed", seed, "--out", dir,
            ],
            tmp.path(),
        );
        assert_eq!(code(&out), 0);
        fs::read(tmp.path().join(dir).join("timeseries.csv")).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));

    let sweep = |dir: &str| {
        let out = plapflow(
            &["sweep", "--p-list", "2,3", "--set", "domain.nx=31", "--set", "flow.tau=0.1", "--out", dir],
            tmp.path(),
        );
        assert_eq!(code(&out), 0);
        fs::read(tmp.path().join(dir).join("sweep.csv")).unwrap()
    };
    assert_eq!(sweep("s1"), sweep("s2"));
}

#[test]
fn sweep_single_row_matches_groundstate() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--set", "domain.nx=31", "--set", "flow.p=3", "--set", "flow.tau=0.1"];
    let mut gs = vec!["groundstate", "--out", "g"];
    gs.extend_from_slice(&common);
    assert_eq!(code(&plapflow(&gs, tmp.path())), 0);
    let mut sw = vec!["sweep", "--p-list", "3", "--out", "s"];
    sw.extend_from_slice(&common);
    assert_eq!(code(&plapflow(&sw, tmp.path())), 0);
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p,lambda_p,lambda_root,mu_p,steps");
    assert_eq!(lines.len(), 2);
    let lam: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let expect = summary_f64(&tmp.path().join("g"), "lambda_p");
    assert!((lam - expect).abs() <= 1e-10 * expect, "{lam} vs {expect}");
    assert!(summary_value(&tmp.path().join("s"), "reference_limit").contains("literature"));
    assert!(tmp.path().join("s/psi_p3.csv").exists());
}

#[test]
fn sloppy_inner_tolerance_fails_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plapflow(
        &["check", "--set", "flow.p=3", "--set", "flow.tau=0.1", "--set", "flow.stop_on_convergence=true",
          "--set", "solver.tol_inner=1e-2", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&out), 3);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("FAIL"), "{table}");

    let out = plapflow(
        &["check", "--set", "flow.p=3", "--set", "flow.tau=0.1", "--set", "flow.stop_on_convergence=true", "--out", "d"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn configuration_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["flow", "--set", "flow.tau=0"],
        vec!["flow", "--set", "flow.tau=0.01", "--set", "flow.N=100", "--set", "flow.T=2"],
        vec!["flow", "--set", "flow.colour=red", "--set", "flow.tau=0.1"],
        vec!["flow", "--set", "flow.p=1.5", "--set", "flow.tau=0.1"],
        vec!["flow"],
        vec!["sweep", "--p-list", "2,x", "--set", "flow.tau=0.1"],
        vec!["flow", "--config", "missing.cfg"],
        vec!["frobnicate"],
    ] {
        let out = plapflow(&args, tmp.path());
        assert_eq!(code(&out), 1, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn flags_override_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.cfg"), "flow.p = 3\nflow.N = 4\nflow.T = 0.4\noutput.dir = from_file\n").unwrap();
    assert_eq!(code(&plapflow(&["flow", "--config", "c.cfg"], tmp.path())), 0);
    assert_eq!(summary_value(&tmp.path().join("from_file"), "p"), "3");
    let out = plapflow(&["flow", "--config", "c.cfg", "--set", "flow.p=4", "--out", "from_flag"], tmp.path());
    assert_eq!(code(&out), 0);
    assert_eq!(summary_value(&tmp.path().join("from_flag"), "p"), "4");
    assert_eq!(summary_value(&tmp.path().join("from_flag"), "steps"), "4");
}

#[test]
fn masked_domain_from_mask_file() {
    let tmp = tempfile::tempdir().unwrap();
    let (nx, ny) = (11, 11);
    let mask: Vec<bool> = (0..nx * ny).map(|k| !((k % nx) >= 6 && (k / nx) >= 6)).collect();
    fs::write(tmp.path().join("l.mask"), write_mask(nx, ny, &mask)).unwrap();
    fs::write(
        tmp.path().join("l.cfg"),
        "domain.kind = masked\ndomain.mask = l.mask\nflow.p = 3\nflow.tau = 0.05\nflow.stop_on_convergence = true\n",
    )
    .unwrap();
    let out = plapflow(&["groundstate", "--config", "l.cfg", "--out", "l"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary_f64(&tmp.path().join("l"), "ground_state_residual") <= 1e-5);
    let grid = Grid::masked(1.0, 1.0, nx, ny, mask.clone()).unwrap();
    let text = fs::read_to_string(tmp.path().join("l/psi.csv")).unwrap();
    let psi = parse_snapshot(&text, Some(&grid)).unwrap().function;
    for (k, &v) in psi.values().iter().enumerate() {
        assert_eq!(v > 0.0, mask[k], "node {k}");
    }
}
