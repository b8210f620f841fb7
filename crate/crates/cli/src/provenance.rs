//! One JSON object per run, appended to a `.jsonl` log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct Record {
    fields: Map<String, Value>,
}

impl Record {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let config: Map<String, Value> =
            cfg.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
        let mut fields = Map::new();
        fields.insert("command".into(), json!(command));
        fields.insert("seed".into(), json!(cfg.seed));
        fields.insert("config".into(), Value::Object(config));
        Self { fields }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn path(&mut self, key: &str, path: &Path) -> &mut Self {
        self.set(key, path.display().to_string())
    }

    pub fn to_line(&self) -> String {
        Value::Object(self.fields.clone()).to_string()
    }

    pub fn append(&self, path: &Path) -> CliResult<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
        writeln!(f, "{}", self.to_line()).map_err(|e| CliError::io(path, e))
    }
}

/// Explicit path if given, otherwise `default`.
pub fn resolve(explicit: Option<&Path>, configured: Option<&str>, default: Option<PathBuf>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| configured.map(PathBuf::from)).or(default)
}
