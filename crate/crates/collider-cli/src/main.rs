//! `collider`: configuration-driven experiment runner for the
//! collision-model engine.
//!
//! Exit codes: 0 = all verdicts pass, 1 = a tolerance verdict failed,
//! 2 = validation or execution error.

mod config;
mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "collider", version, about = "Collision-model experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs; outputs are isolated per config.
    Run {
        /// Experiment config files (JSON).
        configs: Vec<PathBuf>,
        /// Output directory (per-config subdirectories in batch mode).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override for seeded experiments.
        #[arg(long)]
        seed: Option<u64>,
        /// Scale factor applied to every tolerance threshold.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Export the gate-list document of a config's schedule at a timestep.
    Export {
        config: PathBuf,
        #[arg(long)]
        dt: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config, listing every violated field.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { configs, out, seed, tol_scale } => run_many(&configs, out, seed, tol_scale),
        Command::Export { config, dt, out } => export(&config, dt, out),
        Command::Validate { config } => validate(&config),
    }
}

fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), String> {
    let bytes = fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_slice(&bytes)
        .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
    Ok((config, bytes))
}

fn run_many(
    configs: &[PathBuf],
    out: Option<PathBuf>,
    seed: Option<u64>,
    tol_scale: f64,
) -> ExitCode {
    if configs.is_empty() {
        eprintln!("error: no config files given");
        return ExitCode::from(2);
    }
    let batch = configs.len() > 1;
    let mut handles = Vec::new();
    for path in configs {
        let path = path.clone();
        let out = out.clone();
        handles.push(std::thread::spawn(move || -> Result<bool, String> {
            let (mut config, bytes) = load(&path)?;
            if let Some(s) = seed {
                config.seed = Some(s);
            }
            let errors = config.validate();
            if !errors.is_empty() {
                return Err(format!(
                    "{} failed validation:\n  {}",
                    path.display(),
                    errors.join("\n  ")
                ));
            }
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
            let base = out
                .or_else(|| config.out_dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let dir = if batch { base.join(&stem) } else { base };
            let bundle = experiments::run(&config, &bytes, &dir, tol_scale)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            for v in &bundle.verdicts {
                println!(
                    "{stem}: {} {} ({:.3e} {} {:.3e})",
                    v.name,
                    if v.pass { "PASS" } else { "FAIL" },
                    v.value,
                    v.comparison,
                    v.threshold
                );
            }
            for w in &bundle.warnings {
                eprintln!("{stem}: warning: {w}");
            }
            Ok(bundle.all_pass())
        }));
    }
    let mut all_pass = true;
    let mut had_error = false;
    for handle in handles {
        match handle.join() {
            Ok(Ok(pass)) => all_pass &= pass,
            Ok(Err(msg)) => {
                eprintln!("error: {msg}");
                had_error = true;
            }
            Err(_) => {
                eprintln!("error: experiment thread panicked");
                had_error = true;
            }
        }
    }
    if had_error {
        ExitCode::from(2)
    } else if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn export(path: &Path, dt: f64, out: Option<PathBuf>) -> ExitCode {
    let result = (|| -> Result<String, String> {
        let (config, _) = load(path)?;
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(format!("validation failed:\n  {}", errors.join("\n  ")));
        }
        let built = config.build_model().map_err(|e| e.to_string())?;
        let gates =
            collider_core::json::export_schedule(&built.schedule, dt).map_err(|e| e.to_string())?;
        serde_json::to_string_pretty(&gates).map_err(|e| e.to_string())
    })();
    match result {
        Ok(text) => match out {
            Some(path) => match experiments::write_atomic(&path, text.as_bytes()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            },
            None => {
                println!("{text}");
                ExitCode::SUCCESS
            }
        },
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn validate(path: &Path) -> ExitCode {
    match load(path) {
        Ok((config, _)) => {
            let errors = config.validate();
            if errors.is_empty() {
                println!("{}: valid", path.display());
                ExitCode::SUCCESS
            } else {
                for e in &errors {
                    eprintln!("{}: {e}", path.display());
                }
                ExitCode::from(2)
            }
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
