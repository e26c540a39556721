use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qvm::commands::{resolve_threads, run_command};
use qvm::config::{parse_config, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "qvm", version, about = "Spin-particle flocking simulations, hydrodynamics and RG flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the particle model.
    Simulate(Common),
    /// Phase diagram over spin relaxation time and noise.
    Sweep(Common),
    /// Continuum field solver or Goldstone dispersion.
    Hydro(Common),
    /// Fixed-point exponents and reduced coupling flow.
    Rg(Common),
    /// Order, bands and correlations of a particle snapshot.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` in [run].
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output` in [run].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to QVM_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(mode: Mode, args: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            if cfg.mode != mode {
                return Err(format!(
                    "{}: config declares mode = {} but the `{mode}` subcommand was used",
                    path.display(),
                    cfg.mode
                ));
            }
            cfg
        }
        None => RunConfig::new(mode),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Hydro(a) => (Mode::Hydro, a),
        Command::Rg(a) => (Mode::Rg, a),
        Command::Analyze(a) => (Mode::Analyze, a),
    };
    let result = load(mode, args).and_then(|cfg| {
        let threads = resolve_threads(args.threads).map_err(|e| e.to_string())?;
        run_command(&cfg, threads).map_err(|e| e.to_string())
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            eprintln!("wrote {} artifacts to {}", outcome.artifacts.len() + 1, outcome.output.display());
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
