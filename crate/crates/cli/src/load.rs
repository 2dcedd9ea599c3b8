//! Config ingestion: TOML file (or the built-in scenario), dotted-path
//! overrides, and diagnostics that point at the offending line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dcphd::config::{Config, ConfigError, Resolved};
use toml::{Table, Value};

/// Where the configuration came from, kept for error reporting.
pub struct Source {
    path: Option<PathBuf>,
    text: String,
}

pub struct Loaded {
    pub config: Config,
    pub resolved: Resolved,
}

/// One `key=value` override. The value is read as a TOML literal and falls
/// back to a plain string, so `filter.kind=dcp` works unquoted.
#[derive(Debug, Clone)]
pub struct Override {
    pub key: String,
    pub value: Value,
    /// Flag or argument the override came from, for messages.
    pub origin: String,
}

impl Override {
    pub fn parse(arg: &str) -> Result<Self> {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{arg}` is not of the form key=value"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            bail!("override `{arg}` has an empty key segment");
        }
        Ok(Self {
            key: key.to_string(),
            value: parse_literal(raw.trim()),
            origin: format!("--set {arg}"),
        })
    }

    pub fn flag(flag: &str, key: &str, value: Value) -> Self {
        Self {
            key: key.to_string(),
            origin: format!("{flag} {value}"),
            value,
        }
    }
}

fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply(root: &mut Table, ov: &Override) -> Result<()> {
    let segments: Vec<&str> = ov.key.split('.').collect();
    let (last, parents) = segments.split_last().expect("key has at least one segment");
    let mut cur: &mut Value = root
        .entry(parents.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    if parents.is_empty() {
        *cur = ov.value.clone();
        return Ok(());
    }
    for seg in parents.iter().skip(1).chain(std::iter::once(last)) {
        cur = match cur {
            Value::Table(t) => t.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(a) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| anyhow!("{}: `{seg}` is not an array index", ov.origin))?;
                let len = a.len();
                a.get_mut(i)
                    .ok_or_else(|| anyhow!("{}: index {i} out of range (length {len})", ov.origin))?
            }
            _ => bail!("{}: `{}` does not name a table or array", ov.origin, ov.key),
        };
    }
    *cur = ov.value.clone();
    Ok(())
}

impl Source {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Ok(Self {
                    path: Some(p.to_path_buf()),
                    text,
                })
            }
            None => Ok(Self {
                path: None,
                text: toml::to_string(&Config::default_scenario()).expect("default scenario serializes"),
            }),
        }
    }

    fn name(&self) -> String {
        self.path
            .as_ref()
            .map_or_else(|| "<built-in default>".to_string(), |p| p.display().to_string())
    }

    pub fn load(&self, overrides: &[Override]) -> Result<Loaded> {
        let mut table: Table = self
            .text
            .parse()
            .map_err(|e| anyhow!("{}: {}", self.name(), e))?;
        for ov in overrides {
            apply(&mut table, ov)?;
        }
        let config: Config = match Value::Table(table).try_into() {
            Ok(c) => c,
            Err(e) => {
                // prefer the span-carrying error when the file itself is at fault
                if let Err(file_err) = toml::from_str::<Config>(&self.text) {
                    bail!("{}: {}", self.name(), file_err.to_string().trim_end());
                }
                bail!("invalid override: {e}");
            }
        };
        let resolved = config.validate().map_err(|e| self.describe(&e, overrides))?;
        Ok(Loaded { config, resolved })
    }

    fn describe(&self, err: &ConfigError, overrides: &[Override]) -> anyhow::Error {
        if let Some(ov) = overrides.iter().rev().find(|o| err.field.starts_with(o.key.as_str()) || o.key.starts_with(err.field.as_str())) {
            return anyhow!("{err} (set by {})", ov.origin);
        }
        match locate(&self.text, &err.field) {
            Some(line) => anyhow!("{}:{line}: {err}", self.name()),
            None => anyhow!("{}: {err}", self.name()),
        }
    }
}

/// 1-based line that defines `field` (`section.key` or
/// `scenario.tracks[i].key`), falling back to the section header.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, rest) = field.split_once('.')?;
    let (section, index, key) = match rest.split_once('[') {
        Some((arr, tail)) => {
            let (idx, after) = tail.split_once(']')?;
            let key = after.strip_prefix('.').unwrap_or("");
            (format!("{section}.{arr}"), Some(idx.parse::<usize>().ok()?), key.to_string())
        }
        None => (section.to_string(), None, rest.to_string()),
    };

    let mut current = String::new();
    let mut occurrence = 0usize;
    let mut header_line = None;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix("[[").and_then(|s| s.split_once("]]")) {
            current = h.0.trim().to_string();
            if current == section {
                occurrence += 1;
                if index == Some(occurrence - 1) {
                    header_line = Some(n + 1);
                }
            }
            continue;
        }
        if let Some(h) = t.strip_prefix('[').and_then(|s| s.split_once(']')) {
            current = h.0.trim().to_string();
            if current == section && index.is_none() {
                header_line = Some(n + 1);
            }
            continue;
        }
        let in_target = current == section && index.is_none_or(|i| occurrence == i + 1);
        if in_target && !key.is_empty() {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    header_line
}
