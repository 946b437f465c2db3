//! Layered TOML configuration: defaults, then a file, then `key.path=value` overrides.

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};

/// Recursively copy `over` into `base`; tables merge, everything else replaces.
pub fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Parse a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Apply one `a.b.c=value` assignment, creating intermediate tables.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Parse a document and apply overrides in order.
pub fn load(document: &str, overrides: &[String]) -> Result<Table> {
    let mut t: Table = document
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut t, o)?;
    }
    Ok(t)
}

/// `base` with the entries of `over` merged on top.
pub fn layer<T: Serialize + DeserializeOwned>(base: &T, over: &Table) -> Result<T> {
    let mut t = Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut t, over);
    t.try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Sub-table `name`, or an empty table.
pub fn section(table: &Table, name: &str) -> Result<Table> {
    match table.get(name) {
        None => Ok(Table::new()),
        Some(Value::Table(t)) => Ok(t.clone()),
        Some(_) => Err(Error::Config(format!("`{name}` must be a table"))),
    }
}
