use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Loads the optional TOML config file. Each subcommand reads the table
/// named after it; keys mirror the long flag names with underscores.
pub fn load_file(path: Option<&Path>) -> Result<Option<toml::Table>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(Some(table))
}

/// Flags win over file values; unset flags fall back to the file.
pub fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    file: Option<&toml::Table>,
    section: &str,
) -> Result<T, Failure> {
    let mut base = match file.and_then(|f| f.get(section)) {
        Some(v) => serde_json::to_value(v).map_err(|e| Failure::Config(e.to_string()))?,
        None => Value::Object(Map::new()),
    };
    let Value::Object(base_map) = &mut base else {
        return Err(Failure::Config(format!("[{section}] must be a table")));
    };
    let over = serde_json::to_value(flags).map_err(|e| Failure::Config(e.to_string()))?;
    if let Value::Object(m) = over {
        for (k, v) in m {
            if !v.is_null() {
                base_map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Failure::Config(format!("[{section}]: {e}")))
}

/// Canonical text of a resolved config, hashed into CSV headers.
pub fn resolved_text<T: Serialize>(command: &str, cfg: &T) -> String {
    let v = serde_json::json!({ "command": command, "config": cfg });
    serde_json::to_string(&v).expect("serializable config")
}

/// Parses `a,b,c` or `start:stop:step` (inclusive) into a strictly
/// increasing grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("bad grid {spec:?}"));
    let grid: Vec<f64> = if spec.contains(':') {
        let p: Vec<f64> = spec
            .split(':')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [a, b, step] = p[..] else { return Err(bad()) };
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Failure::Config(format!("grid {spec:?} must be non-empty and strictly increasing")));
    }
    Ok(grid)
}

/// `inf` or a number of dB.
pub fn parse_snr(s: &str) -> Result<Option<f64>, Failure> {
    match s.trim() {
        "inf" | "+inf" | "none" => Ok(None),
        t => t
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("bad SNR {s:?}"))),
    }
}
