use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    JsonLines,
}

/// Provenance carried by every output: tool version, config hash and seed.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub scenario: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn line(&self) -> String {
        let scenario = if self.scenario.is_empty() {
            String::new()
        } else {
            format!(" scenario={}", self.scenario)
        };
        format!(
            "qan {}{scenario} config_sha256={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.config_sha256.as_deref().unwrap_or("none"),
            self.seed.map_or("none".to_string(), |s| s.to_string())
        )
    }

    fn json(&self) -> Value {
        json!({
            "tool": "qan",
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": self.scenario,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
        })
    }
}

/// Rows under fixed column names.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format, manifest: &Manifest) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&format!("# {}\n", manifest.line()));
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(cell).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            Format::JsonLines => {
                out.push_str(&json!({ "manifest": manifest.json() }).to_string());
                out.push('\n');
                for r in &self.rows {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .map(|c| c.to_string())
                        .zip(r.iter().cloned())
                        .collect();
                    out.push_str(&Value::Object(obj).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Writes through a temporary sibling and renames, so a failed run never
/// leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_lines_share_columns() {
        let m = Manifest {
            scenario: String::new(),
            config_sha256: Some("ab".into()),
            seed: Some(3),
        };
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![json!(1), json!("x")]);
        let csv = t.render(Format::Csv, &m);
        assert_eq!(
            csv,
            format!("# qan {} config_sha256=ab seed=3\na,b\n1,x\n", env!("CARGO_PKG_VERSION"))
        );
        let jl = t.render(Format::JsonLines, &m);
        let lines: Vec<Value> = jl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["manifest"]["seed"], 3);
        assert_eq!(lines[1], json!({"a": 1, "b": "x"}));
    }
}
