use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use viraldyn_cli::{execute, load_config, Command};

/// Within-host viral dynamics with antibody-dependent enhancement.
#[derive(Parser)]
#[command(name = "viraldyn", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for fit multi-starts and synthetic noise; overrides `seed` in
    /// the config (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = || -> anyhow::Result<Vec<PathBuf>> {
        let cfg = load_config(&args.config)?;
        let out = args
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(|o| cfg.base_dir.join(o)))
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = args.seed.or(cfg.seed).unwrap_or(0);
        execute(args.command, &cfg, &out, seed)
    };
    match run() {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
