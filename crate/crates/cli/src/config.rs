//! Folds a TOML config file into the argument list.
//!
//! Top-level keys become global flags; a table named after the subcommand
//! supplies that subcommand's flags. Keys use flag names with `-` or `_`.
//! A flag given on the command line replaces the config value entirely.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::args::SUBCOMMANDS;

pub struct Merged {
    pub argv: Vec<OsString>,
    pub config: Option<PathBuf>,
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn given(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.strip_prefix(flag).is_some_and(|r| r.starts_with('='))
    })
}

fn scalar(v: &toml::Value) -> Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}

fn push_flag(out: &mut Vec<OsString>, key: &str, value: &toml::Value) -> Result<(), String> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            for item in items {
                out.push(flag.clone().into());
                out.push(scalar(item).map_err(|e| format!("{key}: {e}"))?.into());
            }
        }
        v => {
            out.push(flag.into());
            out.push(scalar(v).map_err(|e| format!("{key}: {e}"))?.into());
        }
    }
    Ok(())
}

fn flags(table: &toml::Table, argv: &[OsString], skip_tables: bool) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (key, value) in table {
        if value.is_table() {
            if skip_tables {
                continue;
            }
            return Err(format!("nested table {key:?} is not supported"));
        }
        if key == "config" {
            return Err("a config file cannot name another config file".into());
        }
        if !given(argv, &format!("--{}", key.replace('_', "-"))) {
            push_flag(&mut out, key, value)?;
        }
    }
    Ok(out)
}

fn load(path: &Path) -> Result<toml::Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    text.parse::<toml::Table>()
        .map_err(|e| format!("config {}: {e}", path.display()))
}

/// The argument list with config values inserted ahead of the explicit
/// flags. Errors are usage errors.
pub fn merge(argv: Vec<OsString>) -> Result<Merged, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(Merged { argv, config: None });
    };
    let table = load(&path)?;
    let global = flags(&table, &argv, true)?;
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|i| i + 1);
    let mut merged = Vec::with_capacity(argv.len() + global.len());
    merged.push(argv[0].clone());
    merged.extend(global);
    match sub {
        Some(i) => {
            let name = argv[i].to_string_lossy().into_owned();
            let section = match table.get(&name) {
                Some(toml::Value::Table(t)) => flags(t, &argv, false)?,
                Some(_) => return Err(format!("config key {name:?} must be a table")),
                None => Vec::new(),
            };
            merged.extend(argv[1..=i].iter().cloned());
            merged.extend(section);
            merged.extend(argv[i + 1..].iter().cloned());
        }
        None => merged.extend(argv[1..].iter().cloned()),
    }
    Ok(Merged {
        argv: merged,
        config: Some(path),
    })
}
