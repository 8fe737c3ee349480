//! `qgraph`: construction checks, obstruction sweeps, envelope brackets,
//! approximation tables and non-polyconvexity certificates.
//!
//! Exit status: 0 when every checked invariant holds, 1 for usage or domain
//! errors, 2 when an invariant fails (its name is printed on stderr). Output
//! goes to `--out`, else to `$QGRAPH_OUT_DIR/<command>.<ext>`, else stdout.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{CliError, Outcome};

#[derive(Parser, Debug)]
#[command(name = "qgraph", version, about = "Q-valued graph currents, envelope brackets and approximation reports")]
struct Cli {
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Directory for outputs when `--out` is absent.
    #[arg(long, global = true, env = "QGRAPH_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// Random sine-series sheets with prescribed Lipschitz constant.
    Random,
    /// Q copies of the zero map on meshes of increasing size.
    Flat,
    /// Branched q-fold graphs over the disk with random amplitude.
    Branched,
    /// Local search towards μ₀; one row per accepted improvement.
    Adversarial,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Zero,
    Ray1,
    Ray2,
    Ray3,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Smooth,
    Twosheet,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the three-plane configuration and verify its identities (JSON).
    Construct {
        #[arg(long)]
        eps: f64,
        /// Same as `--out`.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Partition masses and μ₀-distances of zero-boundary graphs (CSV).
    Obstruction {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
        q: u32,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Family::Random)]
        family: Family,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(2..=64))]
        mesh: u32,
        /// Lipschitz constant of the random family.
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
    },
    /// Two-sided bracket for the envelope at `Q[(0, X)]` (JSON).
    Envelope {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
        q: u32,
        #[arg(long, value_enum)]
        target: TargetArg,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(2..=64))]
        mesh: u32,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        starts: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convergence table of the piecewise-affine approximations (CSV).
    Approx {
        #[arg(long, value_enum, default_value_t = ProfileArg::Smooth)]
        profile: ProfileArg,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        k: Vec<usize>,
        /// ε of the integrand whose energy is reported.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Certificate that the envelope is not convex in the minors at 0 (JSON).
    Certificate {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
        q: u32,
        /// Precomputed envelope values instead of running the brackets.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(2..=64))]
        mesh: u32,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        starts: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Construct { .. } => "construct",
            Command::Obstruction { .. } => "obstruction",
            Command::Envelope { .. } => "envelope",
            Command::Approx { .. } => "approx",
            Command::Certificate { .. } => "certificate",
        }
    }
}

fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Construct { eps, .. } => commands::construct(*eps),
        Command::Obstruction { eps, q, samples, seed, family, mesh, lipschitz } => {
            commands::obstruction(*eps, *q as usize, *samples as usize, *seed, *family, *mesh as usize, *lipschitz)
        }
        Command::Envelope { eps, q, target, mesh, starts, seed } => {
            commands::envelope(*eps, *q as usize, *target, *mesh as usize, *starts as usize, *seed)
        }
        Command::Approx { profile, k, eps } => commands::approx(*profile, k, *eps),
        Command::Certificate { eps, q, inputs, mesh, starts, seed } => {
            commands::certificate(*eps, *q as usize, inputs.as_deref(), *mesh as usize, *starts as usize, *seed)
        }
    }
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let outcome = dispatch(&cli.command)?;
    let explicit = match &cli.command {
        Command::Construct { json: Some(p), .. } => Some(p.clone()),
        _ => cli.out.clone(),
    };
    let target = explicit
        .or_else(|| cli.out_dir.as_ref().map(|d| d.join(format!("{}.{}", cli.command.name(), outcome.extension))));
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
            }
            std::fs::write(&path, &outcome.body).map_err(|e| CliError::Io(path.clone(), e))?;
        }
        None => print!("{}", outcome.body),
    }
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("invariant failed: {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
