use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faithsim_cli::commands::{cmd_equivalence, cmd_rates, cmd_simulate, cmd_sweep, RunOptions};
use faithsim_cli::config::SweepSpec;
use faithsim_cli::{presets, Axis, CliError, Format, ScenarioConfig};

/// Finite-blocklength simulator for a two-receiver sequential measurement.
///
/// Exit codes: 0 success, 1 measurements not equivalent, 2 validation error,
/// 3 resource cap exceeded. The dimension cap can be raised with FAITHSIM_DIM_CAP.
#[derive(Parser)]
#[command(name = "faithsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Information quantities and corner points of the rate regions.
    Rates(Common),
    /// Direct versus sequential Bob measurement.
    Equivalence(Common),
    /// Seeded protocol trials; per-trial CSV plus aggregate JSON.
    Simulate(Common),
    /// One aggregate row per value of a protocol knob.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<Axis>,
        /// Comma-separated values, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, RunOptions), CliError> {
        let cfg = match (&self.config, &self.preset) {
            (Some(p), _) => ScenarioConfig::load(p)?,
            (None, Some(name)) => presets::get(name).ok_or_else(|| {
                CliError::Validation(format!(
                    "unknown preset {name:?}; available: {}",
                    presets::names().collect::<Vec<_>>().join(", ")
                ))
            })?,
            (None, None) => return Err(CliError::Validation("either --config or --preset is required".into())),
        };
        let opts = RunOptions {
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            threads: self.threads,
            trials: self.trials,
            sweep: None,
        };
        Ok((cfg, opts))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rates(c) => {
            let (cfg, o) = c.load()?;
            cmd_rates(&cfg, &o)
        }
        Command::Equivalence(c) => {
            let (cfg, o) = c.load()?;
            cmd_equivalence(&cfg, &o)
        }
        Command::Simulate(c) => {
            let (cfg, o) = c.load()?;
            cmd_simulate(&cfg, &o)
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, mut o) = common.load()?;
            let from_cfg = cfg.sweep.clone();
            let axis = axis.or(from_cfg.as_ref().map(|s| s.axis));
            let values = values.or(from_cfg.map(|s| s.values));
            match (axis, values) {
                (Some(axis), Some(values)) => o.sweep = Some(SweepSpec { axis, values }),
                _ => return Err(CliError::Validation("sweep: --axis and --values (or a sweep block in the config) are required".into())),
            }
            cmd_sweep(&cfg, &o)
        }
        Command::Presets => {
            for cfg in presets::all() {
                println!("{:<22}{}", cfg.name.unwrap_or_default(), cfg.description.unwrap_or_default());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let code = if e.use_stderr() { 2 } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("faithsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
