mod args;
mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};
use clap::Parser;

use args::{Cli, Command};
use output::{digest, manifest_path, ExperimentManifest, OutputDigest};

/// CLI-level failures that are not library errors.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub fn usage_error(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

pub fn io_error(msg: impl Into<String>) -> anyhow::Error {
    CliError::Io(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<spinstein::Error>() {
            return match e {
                spinstein::Error::Usage(_) | spinstein::Error::Domain(_) => 2,
                spinstein::Error::Resource(_) => 3,
                spinstein::Error::Internal(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => 2,
                CliError::Io(_) => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest);
    }
    let started = now();
    let art = commands::run(&cli.command)?;
    let mut outputs = Vec::new();
    for (path, bytes) in &art.files {
        write_file(path, bytes)?;
        outputs.push(OutputDigest {
            path: path.clone(),
            sha256: digest(bytes),
        });
    }
    if let Some(table) = &art.table {
        print!("{table}");
    }
    for note in &art.notes {
        eprintln!("{note}");
    }
    if let Some(first) = outputs.first() {
        let manifest = ExperimentManifest {
            subcommand: cli.command.name(),
            argv: argv.to_vec(),
            flags: serde_json::to_value(&cli.command)?,
            seed: cli.command.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: now(),
            outputs: outputs.clone(),
        };
        let path = manifest_path(&first.path);
        write_file(&path, (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    }
    Ok(())
}

/// Re-runs the manifest's argument vector in memory and compares digests.
fn replay(path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(format!("{}: {e}", path.display())))?;
    let manifest: ExperimentManifest =
        serde_json::from_str(&text).map_err(|e| usage_error(format!("{}: {e}", path.display())))?;
    let cli = Cli::try_parse_from(&manifest.argv).map_err(|e| usage_error(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!(usage_error("a manifest cannot replay another replay"));
    }
    let art = commands::run(&cli.command)?;
    let mut mismatches = 0;
    for want in &manifest.outputs {
        let got = art.files.iter().find(|(p, _)| p == &want.path).map(|(_, b)| digest(b));
        let same = got.as_deref() == Some(want.sha256.as_str());
        println!("{} {}", if same { "identical" } else { "DIFFERENT" }, want.path.display());
        mismatches += usize::from(!same);
    }
    if mismatches > 0 {
        bail!("{mismatches} output(s) differ from the manifest");
    }
    Ok(())
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let argv = match config::merge(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads: must be ≥ 1");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match execute(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
