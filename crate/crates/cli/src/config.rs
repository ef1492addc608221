//! Experiment configuration files.
//!
//! A file holds an optional top-level `seed`, `output_dir` and `experiment`,
//! plus one table named after the experiment. Keys missing from that table
//! take their default values; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{io, CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// The experiment's own table as written in the file (possibly partial).
    pub section: Table,
}

impl RunConfig {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), seed: 0, output_dir: None, section: Table::new() }
    }

    pub fn from_file(experiment: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        Self::from_str(experiment, &text).map_err(|e| match e {
            CliError::Parse { detail, .. } => CliError::Parse { path: path.to_path_buf(), detail },
            other => other,
        })
    }

    pub fn from_str(experiment: &str, text: &str) -> Result<Self> {
        let table: Table =
            toml::from_str(text).map_err(|e| CliError::Parse { path: PathBuf::new(), detail: e.to_string() })?;
        let mut cfg = Self::new(experiment);
        for (key, value) in table {
            match (key.as_str(), value) {
                ("seed", Value::Integer(s)) if s >= 0 => cfg.seed = s as u64,
                ("seed", v) => return Err(bad(&key, format!("expected a non-negative integer, got {v}"))),
                ("output_dir", Value::String(s)) => cfg.output_dir = Some(PathBuf::from(s)),
                ("output_dir", v) => return Err(bad(&key, format!("expected a path string, got {v}"))),
                ("experiment", Value::String(s)) if s == experiment => {}
                ("experiment", v) => {
                    return Err(bad(&key, format!("file is for {v}, not `{experiment}`")));
                }
                (k, Value::Table(t)) if k == experiment => cfg.section = t,
                (k, _) if k == experiment => return Err(bad(&key, "expected a table")),
                _ => return Err(bad(&key, format!("not a key of the `{experiment}` configuration"))),
            }
        }
        Ok(cfg)
    }

    /// Applies a `key=value` (or `a.b=value`) assignment to the experiment
    /// table. Values are read as TOML and fall back to plain strings.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) =
            assignment.split_once('=').ok_or_else(|| bad(assignment, "overrides take the form key=value"))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        match key {
            "seed" => match value {
                Value::Integer(s) if s >= 0 => self.seed = s as u64,
                v => return Err(bad(key, format!("expected a non-negative integer, got {v}"))),
            },
            "output_dir" => self.output_dir = Some(PathBuf::from(raw.trim())),
            _ => {
                let path: Vec<&str> = key.split('.').collect();
                if path.iter().any(|p| p.is_empty()) {
                    return Err(bad(key, "empty key segment"));
                }
                let mut table = &mut self.section;
                for seg in &path[..path.len() - 1] {
                    let entry = table.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new()));
                    table = entry.as_table_mut().ok_or_else(|| bad(key, format!("`{seg}` is not a table")))?;
                }
                table.insert(path[path.len() - 1].to_string(), value);
            }
        }
        Ok(())
    }
}

fn bad(key: &str, detail: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), detail: detail.into() }
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Recursively overlays `over` onto `base`; arrays and scalars are replaced.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn to_table<C: Serialize>(what: &str, value: &C) -> Result<Table> {
    match Value::try_from(value) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => Err(CliError::Serialize { what: what.into(), detail: "not a table".into() }),
        Err(e) => Err(CliError::Serialize { what: what.into(), detail: e.to_string() }),
    }
}

/// Defaults overlaid with `section`, then checked against the typed schema.
pub fn resolve<C: Serialize + DeserializeOwned + Default>(experiment: &str, section: &Table) -> Result<C> {
    let mut table = to_table(experiment, &C::default())?;
    merge(&mut table, section.clone());
    C::deserialize(Value::Table(table)).map_err(|e| bad(experiment, e.message().trim().to_string()))
}

/// The fully expanded configuration written next to a run's outputs.
pub fn resolved_text(experiment: &str, seed: u64, output_dir: &Path, section: Table) -> Result<String> {
    let mut top = Table::new();
    top.insert("experiment".into(), Value::String(experiment.into()));
    top.insert("seed".into(), Value::Integer(seed as i64));
    top.insert("output_dir".into(), Value::String(output_dir.display().to_string()));
    top.insert(experiment.into(), Value::Table(section));
    toml::to_string(&top).map_err(|e| CliError::Serialize { what: "resolved config".into(), detail: e.to_string() })
}
