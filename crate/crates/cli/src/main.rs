use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use memoplate::harness::{emit_plots, load_config, run, Command};
use memoplate::Error;

/// Runs a memoplate experiment and writes CSVs plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "memoplate", version)]
struct Cli {
    /// simulate, decay, limit-sweep, pruss-scan or kernel-check
    command: Command,
    /// TOML configuration, merged over the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output` from the config, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, env = "MEMOPLATE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Also write matplotlib scripts next to the CSVs.
    #[arg(long)]
    plots: bool,
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(if e.is_config() { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overlay = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) => {
                eprintln!("error: {}", Error::io(path, e));
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let config = match load_config(cli.preset.as_deref(), overlay.as_deref(), Some(cli.command)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("warning: thread pool already set up: {e}");
        }
    }
    let out = cli.out.or_else(|| config.output.clone()).unwrap_or_else(|| "out".into());
    let outcome = run(&config, &out, cli.preset.as_deref());
    for line in &outcome.manifest.summary {
        println!("{line}");
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
        return exit_code(e);
    }
    if cli.plots {
        match emit_plots(&outcome.manifest, &out) {
            Ok(scripts) => println!("{} plot scripts written", scripts.len()),
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
        }
    }
    println!("manifest: {}", out.join("manifest.json").display());
    ExitCode::SUCCESS
}
