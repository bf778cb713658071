//! Run configuration: flat `key = value` text with dotted sections.
//!
//! Values are layered: built-in defaults, then the config file, then
//! `--set` overrides and dedicated flags. Unknown keys are rejected at every
//! layer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use plapflow::snapshot::parse_mask;
use plapflow::{FlowConfig, Grid, PExponent, StepConfig};

use crate::error::CliError;
use crate::init::InitSpec;

/// Every accepted key with its default (`None` when it has no default).
const KEYS: &[(&str, Option<&str>)] = &[
    ("domain.kind", Some("interval")),
    ("domain.lx", Some("1")),
    ("domain.ly", Some("1")),
    ("domain.nx", Some("63")),
    ("domain.ny", Some("63")),
    ("domain.mask", None),
    ("flow.p", Some("2")),
    ("flow.N", None),
    ("flow.T", None),
    ("flow.tau", None),
    ("flow.max_steps", None),
    ("flow.stop_on_convergence", Some("false")),
    ("flow.stop_tol", Some("1e-8")),
    ("flow.stop_window", Some("10")),
    ("flow.zero_threshold", Some("1e-13")),
    ("flow.record_every", Some("1")),
    ("flow.init", Some("bump")),
    ("flow.init_scale", Some("1")),
    ("flow.seed", Some("0")),
    ("solver.tol_inner", Some("1e-10")),
    ("solver.max_inner_iters", Some("50000")),
    ("output.dir", Some("out")),
    ("output.snapshot_every", Some("0")),
];

/// Default step cap when only `tau` is given.
const DEFAULT_MAX_STEPS: usize = 10_000;

/// Raw layered key/value settings.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Directory of the config file; relative paths in values resolve here.
    base: Option<PathBuf>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Settings {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string())))
            .collect();
        Settings { values, base: None }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        if !known(key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; blank lines are
    /// ignored.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got '{line}'", i + 1)))?;
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)?;
        self.base = path.parent().map(Path::to_path_buf);
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn merge_override(&mut self, item: &str) -> Result<(), CliError> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override must be key=value, got '{item}'")))?;
        self.set(k, v)
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let path = PathBuf::from(value);
        match &self.base {
            Some(base) if path.is_relative() => base.join(path),
            _ => path,
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parse(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }
}

/// Time stepping resolved from any two of `N`, `T`, `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepping {
    pub tau: f64,
    /// Step count of the run (`N` when given).
    pub steps: usize,
    pub stop_on_convergence: bool,
}

/// Fully validated configuration of a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: Arc<Grid>,
    pub p: PExponent,
    pub stepping: Stepping,
    pub flow: FlowConfig,
    pub solver: StepConfig,
    pub init: InitSpec,
    pub init_scale: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub snapshot_every: usize,
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let grid = build_grid(s)?;
        let p = PExponent::new(s.require("flow.p")?).map_err(|e| CliError::Config(e.to_string()))?;
        let stepping = resolve_stepping(s)?;
        let mut flow = FlowConfig::until_converged(stepping.tau, stepping.steps)
            .map_err(|e| CliError::Config(e.to_string()))?;
        flow.stop_on_convergence = stepping.stop_on_convergence;
        flow.stop_tol = s.require("flow.stop_tol")?;
        flow.stop_window = s.require("flow.stop_window")?;
        flow.zero_threshold = s.require("flow.zero_threshold")?;
        flow.record_every = s.require("flow.record_every")?;
        flow.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let solver = StepConfig {
            tau: stepping.tau,
            tol_inner: s.require("solver.tol_inner")?,
            max_inner_iters: s.require("solver.max_inner_iters")?,
        };
        solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let init = InitSpec::parse(s.get("flow.init").unwrap_or("bump"), |v| s.resolve(v))?;
        init.check_dimension(grid.dim())?;
        let init_scale: f64 = s.require("flow.init_scale")?;
        if !init_scale.is_finite() {
            return Err(CliError::Config("flow.init_scale must be finite".into()));
        }
        Ok(RunConfig {
            grid,
            p,
            stepping,
            flow,
            solver,
            init,
            init_scale,
            seed: s.require("flow.seed")?,
            out_dir: PathBuf::from(s.require::<String>("output.dir")?),
            snapshot_every: s.require("output.snapshot_every")?,
        })
    }
}

fn build_grid(s: &Settings) -> Result<Arc<Grid>, CliError> {
    let kind: String = s.require("domain.kind")?;
    let lx: f64 = s.require("domain.lx")?;
    let nx: usize = s.require("domain.nx")?;
    let grid = match kind.as_str() {
        "interval" => Grid::interval(lx, nx),
        "rectangle" => Grid::rectangle(lx, s.require("domain.ly")?, nx, s.require("domain.ny")?),
        "masked" => {
            let path = s.resolve(&s.require::<String>("domain.mask")?);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read mask {}: {e}", path.display())))?;
            let (mx, my, mask) = parse_mask(&text).map_err(|e| CliError::Config(format!("mask: {e}")))?;
            Grid::masked(lx, s.require("domain.ly")?, mx, my, mask)
        }
        other => {
            return Err(CliError::Config(format!(
                "domain.kind must be interval, rectangle or masked, got '{other}'"
            )))
        }
    };
    grid.map_err(|e| CliError::Config(e.to_string()))
}

fn resolve_stepping(s: &Settings) -> Result<Stepping, CliError> {
    let n: Option<usize> = s.parse("flow.N")?;
    let t: Option<f64> = s.parse("flow.T")?;
    let tau: Option<f64> = s.parse("flow.tau")?;
    if let Some(t) = t {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Config(format!("flow.T must be positive, got {t}")));
        }
    }
    if let Some(tau) = tau {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(CliError::Config(format!("flow.tau must be positive, got {tau}")));
        }
    }
    if n == Some(0) {
        return Err(CliError::Config("flow.N must be at least 1".into()));
    }
    let (tau, n) = match (n, t, tau) {
        (Some(n), Some(t), Some(tau)) => {
            if (tau * n as f64 - t).abs() > 1e-12 * t.max(1.0) {
                return Err(CliError::Config(format!(
                    "inconsistent time stepping: tau*N = {} but T = {t}",
                    tau * n as f64
                )));
            }
            (tau, Some(n))
        }
        (Some(n), Some(t), None) => (t / n as f64, Some(n)),
        (Some(n), None, Some(tau)) => (tau, Some(n)),
        (None, Some(t), Some(tau)) => {
            let steps = (t / tau).round();
            if (steps * tau - t).abs() > 1e-12 * t.max(1.0) || steps < 1.0 {
                return Err(CliError::Config(format!("T = {t} is not a whole number of steps of {tau}")));
            }
            (tau, Some(steps as usize))
        }
        (None, None, Some(tau)) => (tau, None),
        _ => {
            return Err(CliError::Config(
                "time stepping needs flow.tau, or two of flow.N, flow.T, flow.tau".into(),
            ))
        }
    };
    let max_steps: Option<usize> = s.parse("flow.max_steps")?;
    let steps = max_steps.or(n).unwrap_or(DEFAULT_MAX_STEPS);
    if steps == 0 {
        return Err(CliError::Config("flow.max_steps must be at least 1".into()));
    }
    let stop_on_convergence = s
        .get("flow.stop_on_convergence")
        .map(|v| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Config(format!("flow.stop_on_convergence: expected true or false, got '{other}'"))),
        })
        .transpose()?
        .unwrap_or(false);
    Ok(Stepping {
        tau,
        steps,
        stop_on_convergence,
    })
}
