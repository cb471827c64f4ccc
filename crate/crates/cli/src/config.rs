//! `--config` handling. A config file is a flat TOML table whose keys are
//! the long flag names of the chosen subcommand (`lm-weight` or
//! `lm_weight`). Its values are spliced in ahead of the command-line flags,
//! so flags given on the command line win.

use std::path::Path;

use clap::{ArgAction, CommandFactory, Parser};

use crate::Cli;

pub enum ParseFailure {
    Clap(clap::Error),
    Usage(String),
}

pub fn parse_with_config(argv: &[String]) -> Result<Cli, ParseFailure> {
    // no global flag takes a value, so the first bare token is the subcommand
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Cli::try_parse_from(argv).map_err(ParseFailure::Clap);
    };
    if Cli::command().find_subcommand(&argv[sub_pos]).is_none() {
        return Cli::try_parse_from(argv).map_err(ParseFailure::Clap);
    }
    let rest = &argv[sub_pos + 1..];
    let path = rest.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--config") {
        Some("") => rest.get(i + 1).cloned(),
        Some(v) => v.strip_prefix('=').map(str::to_string),
        None => None,
    });
    let Some(path) = path else {
        return Cli::try_parse_from(argv).map_err(ParseFailure::Clap);
    };
    let given: Vec<&str> = rest
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let spliced = config_args(&argv[sub_pos], Path::new(&path), &given)?;
    let mut merged: Vec<String> = argv[..=sub_pos].to_vec();
    merged.extend(spliced);
    merged.extend(rest.iter().cloned());
    Cli::try_parse_from(&merged).map_err(ParseFailure::Clap)
}

/// Flags equivalent to the config file of subcommand `name`, leaving out
/// the flags in `given`.
fn config_args(name: &str, path: &Path, given: &[&str]) -> Result<Vec<String>, ParseFailure> {
    let usage = |m: String| ParseFailure::Usage(m);
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).ok_or_else(|| usage(format!("unknown subcommand {name:?}")))?;
    let mut out = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.as_str()) && flag != "config" && flag != "help")
            .ok_or_else(|| usage(format!("unknown config key {key:?} for {name}")))?;
        if given.contains(&flag.as_str()) {
            continue;
        }
        let is_switch = matches!(arg.get_action(), ArgAction::SetTrue);
        let scalar = |v: &toml::Value| -> Result<String, ParseFailure> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                toml::Value::Boolean(b) => Ok(b.to_string()),
                _ => Err(usage(format!("config key {key:?} must be a scalar"))),
            }
        };
        match value {
            toml::Value::Boolean(b) if is_switch => {
                if *b {
                    out.push(format!("--{flag}"));
                }
            }
            _ if is_switch => return Err(usage(format!("config key {key:?} must be true or false"))),
            toml::Value::Array(items) => {
                for item in items {
                    out.push(format!("--{flag}"));
                    out.push(scalar(item)?);
                }
            }
            v => {
                out.push(format!("--{flag}"));
                out.push(scalar(v)?);
            }
        }
    }
    Ok(out)
}
