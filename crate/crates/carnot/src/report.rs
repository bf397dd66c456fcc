//! Report envelopes and CSV tables.
//!
//! Every report carries the tool version, a hash of the group definition and
//! the seed. Wall time is only recorded on request, since it would break
//! byte-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use carnot_core::CarnotAlgebra;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::formats::GroupFile;

pub const TOOL: &str = "carnot";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical JSON definition of `alg`.
pub fn group_hash(alg: &CarnotAlgebra) -> String {
    let canonical =
        serde_json::to_string(&GroupFile::from_algebra(alg)).expect("group files serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// A plot-ready table written as CSV next to the JSON report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|x| x.to_string()).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub group: Option<(String, String)>,
    pub seed: u64,
    pub metric: String,
    pub wall_time: Option<Duration>,
    pub result: Value,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: &str, alg: Option<&CarnotAlgebra>, seed: u64, metric: &str) -> Self {
        Self {
            command: command.to_string(),
            group: alg.map(|a| (a.name().to_string(), group_hash(a))),
            seed,
            metric: metric.to_string(),
            wall_time: None,
            result: Value::Null,
            tables: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("tool".into(), json!(TOOL));
        m.insert("version".into(), json!(VERSION));
        m.insert("command".into(), json!(self.command));
        if let Some((name, hash)) = &self.group {
            m.insert("group".into(), json!({ "name": name, "hash": hash }));
        }
        m.insert("seed".into(), json!(self.seed));
        m.insert("metric".into(), json!(self.metric));
        if let Some(t) = self.wall_time {
            m.insert("wall_time_s".into(), json!(t.as_secs_f64()));
        }
        m.insert("result".into(), self.result.clone());
        if !self.tables.is_empty() {
            let names: Vec<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
            m.insert("tables".into(), json!(names));
        }
        Value::Object(m)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Writes the JSON to `out` (stdout when absent) and each table to
    /// `<out stem>.<table>.csv`. Tables are only written alongside a file.
    pub fn emit(&self, out: Option<&Path>) -> Result<Vec<PathBuf>> {
        let text = self.to_json_string();
        let Some(path) = out else {
            print!("{text}");
            return Ok(Vec::new());
        };
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
        let mut written = vec![path.to_path_buf()];
        for t in &self.tables {
            let p = table_path(path, &t.name);
            fs::write(&p, t.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn table_path(report: &Path, table: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}.{table}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use carnot_core::BuiltinGroup;

    #[test]
    fn hash_depends_on_constants_only_through_the_definition() {
        let h = BuiltinGroup::Heisenberg(1).build().unwrap();
        let e = BuiltinGroup::Engel.build().unwrap();
        assert_eq!(group_hash(&h), group_hash(&h.clone()));
        assert_ne!(group_hash(&h), group_hash(&e));
        assert_eq!(group_hash(&h).len(), 64);
    }

    #[test]
    fn wall_time_is_opt_in() {
        let h = BuiltinGroup::Heisenberg(1).build().unwrap();
        let mut r = Report::new("x", Some(&h), 7, "qn");
        assert!(r.to_json().get("wall_time_s").is_none());
        r.wall_time = Some(Duration::from_millis(5));
        assert!(r.to_json().get("wall_time_s").is_some());
        assert_eq!(r.to_json()["seed"], 7);
    }

    #[test]
    fn table_csv_layout() {
        let mut t = Table::new("ladder", &["r", "ratio"]);
        t.push_f64(&[0.5, 0.25]);
        assert_eq!(t.to_csv(), "r,ratio\n0.5,0.25\n");
        assert_eq!(
            table_path(Path::new("/tmp/out.json"), "ladder"),
            Path::new("/tmp/out.ladder.csv")
        );
    }
}
