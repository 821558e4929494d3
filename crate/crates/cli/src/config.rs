//! Config-file values are spliced into argv as flags before the real parse,
//! so clap applies one set of validation rules to both sources.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context};
use clap::Command;

use crate::UsageError;

/// Flat `key = value` pairs, sorted by key.
pub fn read_config(path: &Path) -> anyhow::Result<Vec<(String, String, bool)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// Returns `(flag, value, is_bool)` with keys normalized to dashed form.
pub fn parse_config(text: &str) -> Result<Vec<(String, String, bool)>, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut out = Vec::with_capacity(table.len());
    for (key, value) in table {
        let flag = key.replace('_', "-");
        let (v, is_bool) = match value {
            toml::Value::String(s) => (s, false),
            toml::Value::Integer(i) => (i.to_string(), false),
            toml::Value::Float(f) => (f.to_string(), false),
            toml::Value::Boolean(b) => (b.to_string(), true),
            other => return Err(format!("{key}: only scalar values are allowed, got {}", other.type_str())),
        };
        out.push((flag, v, is_bool));
    }
    Ok(out)
}

fn longs(cmd: &Command) -> impl Iterator<Item = (&str, bool)> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(|l| (l, a.get_action().takes_values())))
}

fn given(argv: &[OsString], flag: &str) -> bool {
    let long = format!("--{flag}");
    let prefix = format!("--{flag}=");
    argv.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == long || a.starts_with(&prefix))
}

/// Appends config values for flags absent from `argv`. Only flags known to
/// the selected subcommand (or global) are added.
pub fn merge(cmd: &Command, argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let probe = cmd.clone().ignore_errors(true).try_get_matches_from(&argv);
    let Ok(probe) = probe else { return Ok(argv) };
    let Some(path) = probe.get_one::<std::path::PathBuf>("config").cloned() else { return Ok(argv) };
    let Some((sub_name, _)) = probe.subcommand() else { return Ok(argv) };

    let mut all_known: BTreeSet<&str> = longs(cmd).map(|(l, _)| l).collect();
    for sub in cmd.get_subcommands() {
        all_known.extend(longs(sub).map(|(l, _)| l));
    }
    let sub = cmd.find_subcommand(sub_name).expect("probe matched this subcommand");
    let applicable: Vec<(&str, bool)> = longs(cmd).chain(longs(sub)).collect();

    let mut argv = argv;
    for (flag, value, is_bool) in read_config(&path)? {
        if flag == "config" {
            bail!(UsageError("config files cannot include other config files".into()));
        }
        if !all_known.contains(flag.as_str()) {
            bail!(UsageError(format!("{}: unknown key {flag:?}", path.display())));
        }
        let Some(&(_, takes_value)) = applicable.iter().find(|(l, _)| *l == flag) else {
            log::debug!("config key {flag} does not apply to {sub_name}");
            continue;
        };
        if given(&argv, &flag) {
            continue;
        }
        match (takes_value, is_bool) {
            (false, true) => {
                if value == "true" {
                    argv.push(format!("--{flag}").into());
                }
            }
            (false, false) => bail!(UsageError(format!("{flag} is a switch and needs true or false"))),
            (true, _) => {
                argv.push(format!("--{flag}").into());
                argv.push(value.into());
            }
        }
    }
    Ok(argv)
}
