mod commands;
mod config;
mod error;
mod init;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, Settings};
use error::CliError;

/// Implicit time stepping of the doubly nonlinear p-Laplacian flow.
#[derive(Parser)]
#[command(name = "plapflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one flow and write its time series, snapshots and summary.
    Flow(Common),
    /// Run the flow to convergence and extract the ground state.
    Groundstate(Common),
    /// Ground states for a list of exponents.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents, e.g. 2,4,8,16,32.
        #[arg(long, default_value = "2,4,8,16,32")]
        p_list: String,
    },
    /// Run the invariant suites on the configured problem and random data.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set flow.p=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial data and randomized checks (overrides flow.seed).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut settings = Settings::defaults();
        if let Some(path) = &self.config {
            settings.merge_file(path)?;
        }
        for item in &self.set {
            settings.merge_override(item)?;
        }
        if let Some(out) = &self.out {
            settings.set("output.dir", &out.to_string_lossy())?;
        }
        if let Some(seed) = self.seed {
            settings.set("flow.seed", &seed.to_string())?;
        }
        RunConfig::from_settings(&settings)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Flow(c) => commands::flow(&c.load()?),
        Command::Groundstate(c) => commands::groundstate(&c.load()?),
        Command::Sweep { common, p_list } => {
            let cfg = common.load()?;
            commands::sweep(&cfg, &commands::parse_p_list(&p_list)?)
        }
        Command::Check(c) => commands::check(&c.load()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plapflow: {e}");
            e.exit_code()
        }
    }
}
