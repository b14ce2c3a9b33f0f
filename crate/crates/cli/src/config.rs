//! `--config` files: `key = value` lines turned into long flags.
//!
//! The flags are spliced in right after the subcommand words, ahead of the
//! flags typed on the command line, so the typed ones win.

use std::fs;

use anyhow::{bail, Context, Result};

const TOP_LEVEL_WITH_ACTION: &[&str] = &["code", "store", "sim"];
const GLOBAL_VALUE_FLAGS: &[&str] = &["--threads", "--config"];

/// Parses a config file into `--key value` tokens.
pub fn config_tokens(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {:?}", i + 1, raw);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            bail!("config line {}: bad key {:?}", i + 1, key);
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}

/// Removes `--config <path>` from `args` and splices the file's flags in
/// after the subcommand.
pub fn expand(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().context("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let tokens = config_tokens(&text)?;
    let at = subcommand_end(&rest);
    rest.splice(at..at, tokens);
    Ok(rest)
}

/// Index just past the subcommand words (program name included).
fn subcommand_end(args: &[String]) -> usize {
    let mut i = 1;
    while i < args.len() && args[i].starts_with('-') {
        if GLOBAL_VALUE_FLAGS.contains(&args[i].as_str()) {
            i += 1;
        }
        i += 1;
    }
    match args.get(i) {
        Some(cmd) if TOP_LEVEL_WITH_ACTION.contains(&cmd.as_str()) => (i + 2).min(args.len()),
        Some(_) => i + 1,
        None => args.len(),
    }
}
