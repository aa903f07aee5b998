use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Written as `manifest.json` into every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub output_dir: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub parameters: BTreeMap<String, Value>,
    pub outputs: Vec<OutputFile>,
}

/// Column type recorded in a schema sidecar.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Integer,
    Number,
    String,
    Boolean,
}

#[derive(Debug, Clone, Serialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: Kind,
    pub description: String,
}

pub fn col(name: impl Into<String>, kind: Kind, description: impl Into<String>) -> Column {
    Column {
        name: name.into(),
        kind,
        description: description.into(),
    }
}

/// A CSV table whose header and schema come from the same column list.
pub struct Table {
    columns: Vec<Column>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:?}")
    }
}

pub fn int(x: impl Into<i64>) -> String {
    x.into().to_string()
}

/// An output directory and the manifest being assembled for it.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, dir: PathBuf, seed: u64) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Run {
            manifest: RunManifest {
                command: command.into(),
                tool_version: VERSION.into(),
                output_dir: dir.display().to_string(),
                seed,
                inputs: Vec::new(),
                parameters: BTreeMap::new(),
                outputs: Vec::new(),
            },
            dir,
        })
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {role} file {}", path.display()))?;
        self.manifest.inputs.push(InputFile {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        String::from_utf8(bytes).with_context(|| format!("{role} file {} is not UTF-8", path.display()))
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.manifest.parameters.insert(name.into(), v);
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `<stem>.csv` and its `<stem>.schema.json` sidecar.
    pub fn csv(&mut self, stem: &str, table: &Table) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        let file = format!("{stem}.csv");
        self.write(&file, &bytes)?;
        let schema = serde_json::json!({
            "file": file,
            "header": true,
            "rows": table.len(),
            "columns": table.columns,
        });
        self.json(&format!("{stem}.schema.json"), &schema)
    }

    /// Writes `manifest.json` and returns the output directory.
    pub fn finish(self) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.dir)
    }
}
