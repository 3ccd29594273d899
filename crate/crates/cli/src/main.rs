use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use entangle_core::analysis::io::read_records;
use entangle_core::sim::CountRecord;
use entangle_sim::{
    cmd_car_sweep, cmd_chsh, cmd_fringe, cmd_multiplex_table, cmd_tomo, cmd_validate,
    ExperimentConfig, FringeRequest, Kind, RunContext, SweepVar,
};

/// Simulate and analyze multiplexed fiber entangled photon-pair experiments.
#[derive(Parser)]
#[command(name = "entangle-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: paper-defaults, mixed-state or ideal.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Two-photon interference fringe and its visibility fit.
    Fringe {
        #[arg(long, value_enum, default_value = "polarization")]
        kind: Kind,
        /// Channel pair such as C31-C37 (default: first configured pair).
        #[arg(long)]
        pair: Option<String>,
        /// Fixed idler polarizer angle or interferometer phase, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        basis_deg: f64,
        /// Analyzer that is swept.
        #[arg(long, value_enum, default_value = "signal")]
        sweep: SweepVar,
        /// Analyze this count-record CSV instead of simulating.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// CAR of every channel pair against pump power.
    CarSweep {
        /// Pump powers in W, comma separated (default: from the config).
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<f64>>,
    },
    /// CHSH S parameter from the 16 polarizer settings.
    Chsh {
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Maximum-likelihood state tomography with bootstrap fidelity.
    Tomo {
        #[arg(long, value_enum, default_value = "timebin")]
        kind: Kind,
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Raw and net visibilities of every channel pair in two bases.
    MultiplexTable {
        #[arg(long, value_enum, default_value = "polarization")]
        kind: Kind,
    },
    /// Invariant suite: oracle agreement, tomography identity, Tsirelson.
    Validate,
}

fn load_counts(path: &Option<PathBuf>) -> anyhow::Result<Option<Vec<CountRecord>>> {
    path.as_ref()
        .map(|p| {
            let file =
                std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_records(file).with_context(|| format!("reading {}", p.display()))
        })
        .transpose()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = match (&cli.common.config, &cli.common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => bail!("either --config <path> or --preset <name> is required"),
    };
    let Some(seed) = cli.common.seed.or(config.seed) else {
        bail!("no seed: pass --seed or set `seed` in the config")
    };
    let Some(out) = cli.common.out.clone().or(config.output_dir.clone()) else {
        bail!("no output directory: pass --out or set `output_dir` in the config")
    };
    let ctx = RunContext::new(&config, seed)?;
    let mut ok = true;
    let artifacts = match cli.command {
        Command::Fringe {
            kind,
            pair,
            basis_deg,
            sweep,
            counts,
        } => {
            let req = FringeRequest {
                kind,
                pair: pair.as_deref(),
                basis: basis_deg.to_radians(),
                sweep,
                counts: load_counts(&counts)?,
            };
            let (a, s) = cmd_fringe(&ctx, req)?;
            println!(
                "{} {:?}: V_raw = {}, V_net = {}, period = {:.4} rad",
                s.pair, s.kind, s.visibility.v_raw, s.visibility.v_net, s.fitted_period
            );
            a
        }
        Command::CarSweep { powers } => {
            let (a, _, s) = cmd_car_sweep(&ctx, powers.as_deref())?;
            for p in &s.pairs {
                println!(
                    "{}: peak CAR {} at {:.0} uW",
                    p.pair,
                    p.peak_car,
                    p.peak_power_w * 1e6
                );
            }
            a
        }
        Command::Chsh { pair, counts } => {
            let (a, s) = cmd_chsh(&ctx, pair.as_deref(), load_counts(&counts)?)?;
            println!(
                "{}: S_raw = {} ({:.1} sigma above 2), S_net = {}",
                s.pair, s.raw.s, s.violation_sigmas, s.net.s
            );
            a
        }
        Command::Tomo { kind, pair, counts } => {
            let (a, s) = cmd_tomo(&ctx, kind, pair.as_deref(), load_counts(&counts)?)?;
            println!(
                "{} {:?}: F_raw = {:.4} ± {:.4}, F_net = {:.4} ± {:.4}",
                s.pair,
                s.kind,
                s.raw.fidelity.point,
                s.raw.fidelity.bootstrap.sigma,
                s.net.fidelity.point,
                s.net.fidelity.bootstrap.sigma
            );
            a
        }
        Command::MultiplexTable { kind } => {
            let (a, rows) = cmd_multiplex_table(&ctx, kind)?;
            for r in &rows {
                println!(
                    "{}: raw {:.3}/{:.3}  net {:.3}/{:.3}",
                    r.pair, r.raw_0, r.raw_45, r.net_0, r.net_45
                );
            }
            a
        }
        Command::Validate => {
            let (a, report) = cmd_validate(&ctx)?;
            print!(
                "{}",
                String::from_utf8_lossy(a.get("validate.txt").unwrap_or_default())
            );
            ok = report.passed;
            a
        }
    };
    artifacts.write_to(&out)?;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
