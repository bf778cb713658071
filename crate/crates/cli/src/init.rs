//! Initial data. Builtins are continuum functions sampled at the nodes, so
//! the same spec means the same function at every resolution.
//!
//! | spec                 | function                                        |
//! |----------------------|-------------------------------------------------|
//! | `zero`               | `0`                                             |
//! | `sine:m`             | `sin(mπx/Lx)`, in 2D times `sin(πy/Ly)`         |
//! | `sine:mx:my`         | `sin(mx πx/Lx) sin(my πy/Ly)` (2D only)         |
//! | `bump`               | `4x(Lx-x)/Lx²`, in 2D times the same in `y`     |
//! | `random`             | uniform on `[-1, 1]` per node, from the seed     |
//! | `mixture:c1,c2,...`  | `Σ c_m · sine:m`                                |
//! | `file:path`          | a snapshot file on the same grid                |

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use plapflow::snapshot::parse_snapshot;
use plapflow::{Grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Zero,
    Sine { mx: usize, my: Option<usize> },
    Bump,
    Random,
    Mixture(Vec<f64>),
    File(PathBuf),
}

fn bad(spec: &str, why: &str) -> CliError {
    CliError::Config(format!("flow.init '{spec}': {why}"))
}

fn mode(spec: &str, text: &str) -> Result<usize, CliError> {
    match text.trim().parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m),
        _ => Err(bad(spec, "mode numbers are integers >= 1")),
    }
}

impl InitSpec {
    pub fn parse(spec: &str, resolve: impl Fn(&str) -> PathBuf) -> Result<Self, CliError> {
        let spec = spec.trim();
        let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "zero" if rest.is_empty() => Ok(InitSpec::Zero),
            "bump" if rest.is_empty() => Ok(InitSpec::Bump),
            "random" if rest.is_empty() => Ok(InitSpec::Random),
            "sine" => {
                let mut parts = rest.split(':');
                let mx = mode(spec, parts.next().unwrap_or(""))?;
                let my = parts.next().map(|m| mode(spec, m)).transpose()?;
                if parts.next().is_some() {
                    return Err(bad(spec, "expected sine:m or sine:mx:my"));
                }
                Ok(InitSpec::Sine { mx, my })
            }
            "mixture" => {
                let coeffs: Vec<f64> = rest
                    .split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|_| bad(spec, "coefficients must be numbers")))
                    .collect::<Result<_, _>>()?;
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(bad(spec, "coefficients must be finite"));
                }
                Ok(InitSpec::Mixture(coeffs))
            }
            "file" if !rest.is_empty() => Ok(InitSpec::File(resolve(rest))),
            _ => Err(bad(spec, "expected zero, bump, random, sine:m, sine:mx:my, mixture:c1,c2,... or file:path")),
        }
    }

    pub fn check_dimension(&self, dim: usize) -> Result<(), CliError> {
        match self {
            InitSpec::Sine { my: Some(_), .. } if dim == 1 => {
                Err(CliError::Config("flow.init: sine:mx:my needs a 2D domain".into()))
            }
            _ => Ok(()),
        }
    }

    /// Samples the initial data on `grid`, multiplied by `scale`.
    pub fn build(&self, grid: &Arc<Grid>, seed: u64, scale: f64) -> Result<GridFunction, CliError> {
        let (lx, ly) = grid.extents();
        let two_d = grid.dim() == 2;
        let sine = move |mx: usize, my: usize, x: f64, y: f64| {
            let sx = (mx as f64 * PI * x / lx).sin();
            if two_d {
                sx * (my as f64 * PI * y / ly).sin()
            } else {
                sx
            }
        };
        let solver_err = |e: plapflow::Error| CliError::Config(format!("initial data: {e}"));
        let g = match self {
            InitSpec::Zero => GridFunction::zeros(grid),
            InitSpec::Sine { mx, my } => {
                let my = my.unwrap_or(1);
                GridFunction::from_fn(grid, |x, y| sine(*mx, my, x, y)).map_err(solver_err)?
            }
            InitSpec::Bump => GridFunction::from_fn(grid, |x, y| {
                let bx = 4.0 * x * (lx - x) / (lx * lx);
                if two_d {
                    bx * 4.0 * y * (ly - y) / (ly * ly)
                } else {
                    bx
                }
            })
            .map_err(solver_err)?,
            InitSpec::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                GridFunction::from_fn(grid, |_, _| rng.gen_range(-1.0..=1.0)).map_err(solver_err)?
            }
            InitSpec::Mixture(coeffs) => GridFunction::from_fn(grid, |x, y| {
                coeffs.iter().enumerate().map(|(m, c)| c * sine(m + 1, 1, x, y)).sum()
            })
            .map_err(solver_err)?,
            InitSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_snapshot(&text, Some(grid))
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                    .function
            }
        };
        Ok(if scale == 1.0 { g } else { g.scaled(scale) })
    }
}
