//! Flat `key = value` files expanded into command-line flags.
//!
//! Each key names a long flag of the chosen subcommand (`_` and `-` are
//! interchangeable). The expanded flags are inserted directly after the
//! subcommand, so anything given on the real command line overrides them.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

/// Entries of a config file, in order. Blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got {raw:?}", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Converts entries into flags accepted by `sub`, rejecting unknown keys.
pub fn to_flags(entries: &[(String, String)], sub: &Command) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (key, value) in entries {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !a.is_hide_set())
        else {
            let known: Vec<&str> = sub.get_arguments().filter(|a| !a.is_hide_set()).filter_map(|a| a.get_long()).collect();
            bail!(
                "unknown key {key:?} for `{}` (accepted: {})",
                sub.get_name(),
                known.join(", ")
            );
        };
        if key == "help" || key == "config" {
            bail!("key {key:?} is not allowed in a config file");
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => flags.push(format!("--{key}")),
                "false" => {}
                other => bail!("key {key:?} takes true or false, got {other:?}"),
            },
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.clone());
            }
        }
    }
    Ok(flags)
}

/// Splices the flags from `--config FILE` (if present) into `args`.
pub fn expand(args: Vec<String>, root: &Command) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().context("--config needs a file path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let Some((at, sub)) = rest
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| root.find_subcommand(a).map(|s| (i, s)))
    else {
        bail!("--config needs a subcommand to apply to");
    };
    let text = fs::read_to_string(Path::new(&path)).with_context(|| format!("cannot read config file {path}"))?;
    let flags = to_flags(&parse(&text).with_context(|| format!("in config file {path}"))?, sub)
        .with_context(|| format!("in config file {path}"))?;
    rest.splice(at + 1..at + 1, flags);
    Ok(rest)
}
