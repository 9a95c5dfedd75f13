//! `--config` files: TOML whose keys are long flag names.
//!
//! Top-level scalars are global flags (`data_root`, `threads`); a table
//! named after a subcommand holds that command's flags:
//!
//! ```toml
//! data_root = "/srv/runs"
//! threads = 4
//!
//! [capacity]
//! bins = 16
//! sort = "cols:max"
//! ```
//!
//! Values are spliced into the argument list before parsing, and only for
//! flags not already given on the command line, so flags win.

use std::ffi::OsString;
use std::path::PathBuf;

pub const SUBCOMMANDS: [&str; 7] = ["ingest", "query", "capacity", "perf", "series", "deconv", "serve"];

/// Path given to `--config`, if any.
pub fn config_path(args: &[OsString]) -> Result<Option<PathBuf>, String> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let arg = arg.to_string_lossy();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            return match iter.next() {
                Some(v) => Ok(Some(PathBuf::from(v))),
                None => Err("--config needs a path".into()),
            };
        }
        if let Some(v) = arg.strip_prefix("--config=") {
            return Ok(Some(PathBuf::from(v)));
        }
    }
    Ok(None)
}

fn has_flag(args: &[OsString], flag: &str) -> bool {
    let prefix = format!("{flag}=");
    args.iter()
        .map(|a| a.to_string_lossy())
        .take_while(|a| a != "--")
        .any(|a| a == flag || a.starts_with(&prefix))
}

fn flag_values(key: &str, value: &toml::Value) -> Result<Vec<OsString>, String> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &toml::Value| -> Result<Option<String>, String> {
        match v {
            toml::Value::String(s) => Ok(Some(s.clone())),
            toml::Value::Integer(i) => Ok(Some(i.to_string())),
            toml::Value::Float(f) => Ok(Some(f.to_string())),
            toml::Value::Boolean(_) => Ok(None),
            other => Err(format!("config key {key:?}: unsupported value {other}")),
        }
    };
    let mut out = Vec::new();
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            for item in items {
                let v = scalar(item)?.ok_or_else(|| format!("config key {key:?}: arrays of booleans are not flags"))?;
                out.push(flag.clone().into());
                out.push(v.into());
            }
        }
        other => {
            out.push(flag.into());
            out.push(scalar(other)?.expect("non-boolean").into());
        }
    }
    Ok(out)
}

/// Splices the config file's values into `args`. Global flags go right
/// after the program name, command flags at the end.
pub fn merge(args: Vec<OsString>, text: &str) -> Result<Vec<OsString>, String> {
    let table: toml::Table = toml::from_str(text).map_err(|e| format!("bad config file: {e}"))?;
    let command = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy())
        .find(|a| SUBCOMMANDS.contains(&a.as_ref()))
        .map(|a| a.to_string());

    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if !SUBCOMMANDS.contains(&key.as_str()) {
                    return Err(format!("config section [{key}] is not a subcommand"));
                }
                if command.as_deref() != Some(key.as_str()) {
                    continue;
                }
                for (k, v) in section {
                    if !has_flag(&args, &format!("--{}", k.replace('_', "-"))) {
                        local.extend(flag_values(k, v)?);
                    }
                }
            }
            v => {
                if key != "config" && !has_flag(&args, &format!("--{}", key.replace('_', "-"))) {
                    global.extend(flag_values(key, v)?);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    let mut rest = args.into_iter();
    out.extend(rest.next());
    out.extend(global);
    let rest: Vec<OsString> = rest.collect();
    // Keep anything after `--` last.
    let split = rest.iter().position(|a| a == "--").unwrap_or(rest.len());
    out.extend(rest[..split].iter().cloned());
    out.extend(local);
    out.extend(rest[split..].iter().cloned());
    Ok(out)
}
