use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

mod stages;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Dump eigenvalues and sampled modes.
    Spectrum,
    /// Scan the energy window for critical points.
    Crit,
    /// Integrate one descending trajectory from `start`.
    Flow,
    /// Count orbits between generators of adjacent degree.
    Orbits,
    /// Assemble the complex, check d^2 = 0, compute homology.
    Complex,
    /// Continuation maps along the configured homotopy.
    Continue,
    /// Run every invariant check and the complex.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "dirac-floer", version, about = "Floer-type homology of a truncated Dirac functional")]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for shooting sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match dirac_floer_core::config::RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let out = cli
        .out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match stages::run(cli.stage, &cfg, &out) {
        Ok(stages::Status::Done) => ExitCode::SUCCESS,
        Ok(stages::Status::Failed(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
