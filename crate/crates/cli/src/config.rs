//! Config files as partial overrides of built-in defaults, and seed
//! resolution.

use std::path::Path;

use myoprop::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const SEED_ENV: &str = "MYOPROP_SEED";

/// `--seed`, else `MYOPROP_SEED`, else `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not a non-negative integer"))),
        Err(_) => Ok(fallback),
    }
}

fn overlay(base: &mut Value, patch: Value, at: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v, &path)?,
                    None => return Err(Error::Config(format!("unknown config key `{path}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Reads `path` (if any) as JSON and applies it key by key over `default`.
pub fn load_with_defaults<T: Serialize + DeserializeOwned>(path: Option<&Path>, default: T) -> Result<T> {
    let Some(path) = path else { return Ok(default) };
    let text = std::fs::read_to_string(path)?;
    let patch: Value = serde_json::from_str(&text).map_err(|e| Error::Data {
        path: path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let mut base = serde_json::to_value(default)?;
    overlay(&mut base, patch, "")?;
    serde_json::from_value(base).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
