//! `rough-resonance`: compute scattering resonances of rough planar
//! obstacles from a TOML run configuration.

use clap::{Args, Parser, Subcommand};
use rough_resonance_cli::config::parse_config;
use rough_resonance_cli::pipeline::{run, Command, EXIT_CONFIG, EXIT_IO};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rough-resonance",
    version,
    about = "Scattering resonances of the Dirichlet Laplacian exterior to rough planar obstacles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (overrides the configuration).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable the artifact cache for this run.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and export the triangulation with a quality report.
    Mesh(Common),
    /// Assemble and serialize the spectral model at the reference point.
    Model(Common),
    /// Evaluate log|det T| over a rectangular grid (CSV).
    Contour(Common),
    /// Locate resonances from configured or grid-derived seeds (JSON).
    Find(Common),
    /// Certify a zero cover of the search window (JSON).
    Certify(Common),
    /// Disk convergence table across mesh widths (JSON + CSV).
    Converge(Common),
    /// Julia-parameter or Koch-level resonance sweep (JSON + CSV).
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match &cli.cmd {
        Cmd::Mesh(c) => (Command::Mesh, c),
        Cmd::Model(c) => (Command::Model, c),
        Cmd::Contour(c) => (Command::Contour, c),
        Cmd::Find(c) => (Command::Find, c),
        Cmd::Certify(c) => (Command::Certify, c),
        Cmd::Converge(c) => (Command::Converge, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };

    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(EXIT_IO as u8);
        }
    };
    let (mut cfg, warnings) = match parse_config(&text) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(t) = common.threads {
        cfg.output.threads = t;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    if common.no_cache {
        cfg.output.cache = false;
    }

    match run(cmd, &cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
