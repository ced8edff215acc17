//! `--config` support: values from a TOML file are turned into flags and
//! inserted right after the subcommand, so flags given on the command line
//! (which come later) override them.
//!
//! ```toml
//! [sanitize]
//! epsilon = 2.0
//! mode = "custext_plus"
//!
//! [attack.query]
//! trials = 2000
//! ```

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

const SUBCOMMANDS: &[&str] = &["build-map", "sanitize", "attack", "sweep", "verify-dp", "export-jsonl"];

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Index of the last subcommand token, and the table path it selects.
fn subcommand_position(argv: &[OsString]) -> Option<(usize, Vec<String>)> {
    let i = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))?;
    let name = argv[i].to_string_lossy().into_owned();
    if name == "attack" {
        let sub = argv.get(i + 1)?.to_string_lossy().into_owned();
        return Some((i + 1, vec![name, sub]));
    }
    Some((i, vec![name]))
}

fn to_flags(table: &toml::Table) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(true) => {
                flags.push(flag.into());
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    other => bail!("unsupported list item {other} for {key}"),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            other => bail!("unsupported value {other} for {key}"),
        };
        flags.push(flag.into());
        flags.push(text.into());
    }
    Ok(flags)
}

/// Returns `argv` with the config file's flags spliced in.
pub fn apply(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let Some((pos, keys)) = subcommand_position(&argv) else {
        return Ok(argv);
    };
    let mut table = Some(&doc);
    for key in &keys {
        table = table.and_then(|t| t.get(key)).and_then(|v| v.as_table());
    }
    let Some(table) = table else {
        return Ok(argv);
    };
    let flags = to_flags(table).with_context(|| format!("in config {}", path.display()))?;
    let mut out = argv;
    out.splice(pos + 1..pos + 1, flags);
    Ok(out)
}
