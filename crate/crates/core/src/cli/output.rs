use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliResult;
use crate::gridio::write_grid_csv;
use crate::spectrum::JointAmplitudeGrid;

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut fs::File) -> std::io::Result<()>) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        write(&mut file)?;
        file.flush()?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(Into::into)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| super::Failure::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, |f| f.write_all(text.as_bytes()))
}

pub fn write_grid(path: &Path, jsa: &JointAmplitudeGrid) -> CliResult<()> {
    let mut result = Ok(());
    write_atomic(path, |f| {
        let mut buf = std::io::BufWriter::new(f);
        result = write_grid_csv(jsa, &mut buf);
        buf.flush()
    })?;
    result.map_err(Into::into)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, |f| f.write_all(bytes))
}

/// ISO-8601 UTC timestamp; `SOURCE_DATE_EPOCH` pins it for reproducible builds.
pub fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Every number in `value`, keyed by its dotted path.
pub fn flatten_numbers(value: &Value) -> BTreeMap<String, f64> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, f64>) {
        match v {
            Value::Number(n) => {
                if let Some(x) = n.as_f64() {
                    out.insert(prefix.to_string(), x);
                }
            }
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), child, out);
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk("", value, &mut out);
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub timestamp: String,
    pub seed: u64,
    /// Fully resolved parameters; enough to recompute every output.
    pub parameters: Value,
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, parameters: Value, summary: &Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            timestamp: timestamp(),
            seed,
            parameters,
            metrics: flatten_numbers(summary),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_paths() {
        let v: Value = serde_json::json!({"a": 1.5, "b": {"c": [2, {"d": 3}]}, "s": "x"});
        let f = flatten_numbers(&v);
        assert_eq!(f["a"], 1.5);
        assert_eq!(f["b.c[0]"], 2.0);
        assert_eq!(f["b.c[1].d"], 3.0);
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_bytes(&p, b"one").unwrap();
        write_bytes(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
