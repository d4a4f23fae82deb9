use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

mod config;
mod tasks;

/// Periodic orbit families on stable energy surfaces: continuation, period
/// certificates, limit sets and critical values.
#[derive(Parser)]
#[command(name = "orbitcyl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task described by a config file.
    Run { config: PathBuf },
    /// Check schema and expressions only; print the normalized config.
    Validate { config: PathBuf },
}

#[derive(Serialize)]
struct Metadata {
    task: String,
    config: String,
    version: &'static str,
    parallel: bool,
    started_unix: f64,
    elapsed_seconds: f64,
    pass: bool,
    files: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn run(path: &Path) -> Result<bool> {
    let loaded = config::load(path)?;
    let started = unix_now();
    let clock = Instant::now();
    let outcome = tasks::run(&loaded).with_context(|| format!("task `{}` failed", loaded.config.task.name()))?;
    let files = tasks::write(&loaded, &outcome)?;
    let meta = Metadata {
        task: loaded.config.task.name().into(),
        config: path.display().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        parallel: loaded.config.numerics.execution() == orbitcyl::Execution::Parallel && orbitcyl::Execution::parallel_available(),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        pass: outcome.pass,
        files: files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    let meta_path = loaded.base_dir.join(&loaded.config.output.dir).join("metadata.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("cannot write {}", meta_path.display()))?;
    println!("{}: {}", loaded.config.task.name(), outcome.summary);
    for f in &files {
        println!("  wrote {}", f.display());
    }
    println!("{}", if outcome.pass { "PASS" } else { "CERTIFICATE FAILURE" });
    Ok(outcome.pass)
}

fn validate(path: &Path) -> Result<()> {
    let loaded = config::load(path)?;
    println!("ok");
    print!("{}", config::normalized(&loaded.config)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Validate { config } => validate(config).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
