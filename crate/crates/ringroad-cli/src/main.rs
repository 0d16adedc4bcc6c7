use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ringroad_cli::commands::{self, CliError};
use ringroad_cli::config;

/// Ring-road traffic dynamics: simulation, stability, and bifurcation
/// sweeps with plot-ready tabular output.
#[derive(Parser)]
#[command(name = "ringroad", version, about)]
struct Cli {
    /// TOML configuration file; defaults fill anything unset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set model.v_star=9.0 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Cap on worker threads for the sweep commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the braking protocol and export the trajectory.
    Simulate,
    /// Tabulate the equilibrium velocity over a density grid.
    Equilibrium,
    /// Export all z-roots of the linearized map at the configured ring.
    Spectrum,
    /// Bisect the circumference for the density where linear stability
    /// changes.
    #[command(name = "critical-density")]
    CriticalDensity,
    /// Classify both limit branches over a density grid.
    #[command(name = "bifurcation-1d")]
    Bifurcation1d,
    /// Locate the stop-and-go onset and offset densities.
    #[command(name = "sg-onset")]
    SgOnset,
    /// Sweep the ideal speed and record both phase boundaries.
    #[command(name = "phase-2d")]
    Phase2d,
    /// Derive the critical speed-advisory curve over a density grid.
    #[command(name = "vsa-curve")]
    VsaCurve,
    /// Compare traffic performance with and without the advisory.
    #[command(name = "vsa-compare")]
    VsaCompare,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = config::load(cli.config.as_deref(), &cli.sets)?;
    commands::prepare_out_dir(&cli.out, &config)?;
    match cli.command {
        Command::Simulate => commands::simulate(&config, &cli.out),
        Command::Equilibrium => commands::equilibrium(&config, &cli.out),
        Command::Spectrum => commands::spectrum(&config, &cli.out),
        Command::CriticalDensity => commands::critical_density_cmd(&config, &cli.out),
        Command::Bifurcation1d => commands::bifurcation_1d_cmd(&config, &cli.out),
        Command::SgOnset => commands::sg_onset_cmd(&config, &cli.out),
        Command::Phase2d => commands::phase_2d_cmd(&config, &cli.out),
        Command::VsaCurve => commands::vsa_curve_cmd(&config, &cli.out),
        Command::VsaCompare => commands::vsa_compare_cmd(&config, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not set --jobs: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numeric(_) => ExitCode::from(3),
                CliError::Io(_, _) => ExitCode::from(4),
            }
        }
    }
}
