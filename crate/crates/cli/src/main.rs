mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{BenchmarkArgs, Common, OptimizeArgs, Status, SweepArgs, TomographyArgs};
use config::{Loaded, SystemOverrides};

/// Recoil-free and Mikado gate design for trapped-atom qubits.
#[derive(Parser, Debug)]
#[command(name = "recoilfree", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the `seed` key of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy, Default)]
struct SystemFlags {
    /// Rabi frequency Ω/2π in kHz.
    #[arg(long)]
    rabi_khz: Option<f64>,
    /// Trap frequency ω/2π in kHz.
    #[arg(long)]
    trap_khz: Option<f64>,
    /// Lamb-Dicke parameter.
    #[arg(long)]
    eta: Option<f64>,
    /// Ground-state population of the thermal motional state.
    #[arg(long)]
    p0: Option<f64>,
}

impl From<SystemFlags> for SystemOverrides {
    fn from(f: SystemFlags) -> Self {
        Self { rabi_khz: f.rabi_khz, trap_khz: f.trap_khz, eta: f.eta, p0: f.p0 }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a phase-modulated pulse.
    Optimize {
        /// sr88-mikado, sr88-rx90 or trajectory.
        #[arg(long)]
        preset: Option<String>,
        /// rx90 or mikado.
        #[arg(long)]
        target: Option<String>,
        /// Pulse duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Iteration budget per restart.
        #[arg(long)]
        iterations: Option<usize>,
        /// Number of Fourier harmonics.
        #[arg(long)]
        n_c: Option<usize>,
        #[command(flatten)]
        system: SystemFlags,
    },
    /// Sweep duration, p0, intensity deviation or the composite-gate grid.
    Sweep {
        /// duration, p0, intensity or gate-grid.
        #[arg(long)]
        kind: Option<String>,
        /// Pulse file for the p0, intensity and gate-grid sweeps.
        #[arg(long)]
        pulse: Option<PathBuf>,
        #[command(flatten)]
        system: SystemFlags,
    },
    /// Randomized benchmarking of composite gates.
    Benchmark {
        /// mikado, mossbauer or idealized-L4.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        circuits: Option<usize>,
        /// Mikado pulse file (mikado mode).
        #[arg(long)]
        pulse: Option<PathBuf>,
        #[command(flatten)]
        system: SystemFlags,
    },
    /// Phase-space trajectories and perturbative expansion of a pulse.
    Analyze {
        #[arg(long)]
        pulse: Option<PathBuf>,
        #[command(flatten)]
        system: SystemFlags,
    },
    /// Process tomography of a pulse.
    Tomography {
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// rx90, mikado or identity.
        #[arg(long)]
        target: Option<String>,
        /// Relative intensity deviation.
        #[arg(long)]
        rel_dev: Option<f64>,
        #[command(flatten)]
        system: SystemFlags,
    },
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    let loaded = Loaded::read(cli.config.as_deref())?;
    let seed = cli.seed.or(loaded.file.seed).unwrap_or(0);
    let common = |system: SystemFlags| Common { loaded: loaded.clone(), seed, out: cli.out.clone(), system: system.into() };
    match cli.command {
        Command::Optimize { preset, target, duration, restarts, iterations, n_c, system } => {
            commands::optimize(&common(system), &OptimizeArgs { preset, target, duration_s: duration, restarts, iterations, n_c })
        }
        Command::Sweep { kind, pulse, system } => commands::sweep(&common(system), &SweepArgs { kind, pulse }),
        Command::Benchmark { mode, depth, circuits, pulse, system } => {
            commands::benchmark(&common(system), &BenchmarkArgs { mode, depth, circuits, pulse })
        }
        Command::Analyze { pulse, system } => commands::analyze(&common(system), pulse.as_deref()),
        Command::Tomography { pulse, target, rel_dev, system } => {
            commands::tomography(&common(system), &TomographyArgs { pulse, target, rel_dev })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: optimizer did not converge within the iteration budget");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
