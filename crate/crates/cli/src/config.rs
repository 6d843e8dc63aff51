//! Flat `key = value` configuration files.
//!
//! Values are spliced into the argument vector as flags of the selected
//! subcommand unless the same flag was given explicitly, so flags win over
//! the file and the file wins over built-in defaults.

use anyhow::Result;
use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::{io_error, usage_error};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage_error(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(String::from)
        }
    })
}

pub fn merge(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| io_error(format!("{path}: {e}")))?;
    let entries = parse(&text)?;
    Ok(splice(argv, &entries))
}

/// Appends config entries accepted by the innermost subcommand named in
/// `argv` and not already present.
pub fn splice(mut argv: Vec<String>, entries: &[(String, String)]) -> Vec<String> {
    let mut cmd = Cli::command();
    for tok in argv.iter().skip(1) {
        if tok.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(tok) {
            Some(sub) => cmd = sub.clone(),
            None => continue,
        }
    }
    let given = |key: &str| {
        let flag = format!("--{key}");
        argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra = Vec::new();
    for (key, value) in entries {
        if key == "config" || given(key) {
            continue;
        }
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            if value == "true" {
                extra.push(format!("--{key}"));
            }
        } else {
            extra.push(format!("--{key}"));
            extra.push(value.clone());
        }
    }
    argv.extend(extra);
    argv
}
