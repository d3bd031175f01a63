//! JSON-lines experiment records and CSV summaries.
//!
//! A record file starts with a header line carrying the schema name and
//! version, the software version and the materialized configuration. Unit
//! lines follow in (p, sample) order, then one summary line and one timing
//! line. The digest covers everything except the timing line.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const SCHEMA: &str = "equidist.record";
pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_SCHEMA: &str = "# equidist.summary v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub header: Value,
    pub units: Vec<Value>,
    pub summary: Value,
    pub wall_clock_s: f64,
}

impl Record {
    pub fn new(kind: &str, cfg: &ExperimentConfig) -> Self {
        let header = json!({
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "kind": kind,
            "software": concat!("equidist ", env!("CARGO_PKG_VERSION")),
            "config": cfg.to_text(),
        });
        Self { kind: kind.to_string(), header, units: Vec::new(), summary: Value::Null, wall_clock_s: 0.0 }
    }

    pub fn push(&mut self, unit: impl Serialize) {
        self.units.push(serde_json::to_value(unit).expect("records hold plain data"));
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![self.header.to_string()];
        out.extend(self.units.iter().map(|u| u.to_string()));
        out.push(json!({ "summary": self.summary }).to_string());
        out
    }

    /// SHA-256 over header, units and summary.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for l in self.lines() {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = self.lines().join("\n");
        s.push('\n');
        s.push_str(&json!({ "wall_clock_s": self.wall_clock_s }).to_string());
        s.push('\n');
        s
    }

    /// Writes `<dir>/<kind>.jsonl` and returns the path.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.jsonl", self.kind));
        std::fs::File::create(&path)?.write_all(self.to_jsonl().as_bytes())?;
        Ok(path)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Value = serde_json::from_str(lines.next().ok_or("empty record")?).map_err(|e| e.to_string())?;
        if header["schema"] != SCHEMA {
            return Err(format!("not an {SCHEMA} file"));
        }
        if header["version"] != SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", header["version"]));
        }
        let kind = header["kind"].as_str().ok_or("header without kind")?.to_string();
        let mut rec = Self { kind, header, units: Vec::new(), summary: Value::Null, wall_clock_s: 0.0 };
        for l in lines {
            let v: Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
            if let Some(s) = v.get("summary") {
                rec.summary = s.clone();
            } else if let Some(t) = v.get("wall_clock_s") {
                rec.wall_clock_s = t.as_f64().unwrap_or(0.0);
            } else {
                rec.units.push(v);
            }
        }
        Ok(rec)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// CSV with a schema comment line, a header row and one row per entry.
pub fn csv(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("{CSV_SCHEMA}\n{}\n", columns.join(","));
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Full-precision float for CSV cells.
pub fn cell(x: f64) -> String {
    format!("{x:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_digest() {
        let mut r = Record::new("dim", &ExperimentConfig::default());
        r.push(json!({"p": 8, "dim": 7}));
        r.summary = json!({"ok": true});
        r.wall_clock_s = 1.5;
        let back = Record::parse(&r.to_jsonl()).unwrap();
        assert_eq!(back, r);
        let mut r2 = r.clone();
        r2.wall_clock_s = 9.0;
        assert_eq!(r.digest(), r2.digest());
        r2.units[0]["dim"] = json!(8);
        assert_ne!(r.digest(), r2.digest());
    }

    #[test]
    fn rejects_other_schemas() {
        assert!(Record::parse("{\"schema\":\"x\",\"version\":1}").is_err());
        assert!(Record::parse(&format!("{{\"schema\":\"{SCHEMA}\",\"version\":99,\"kind\":\"k\"}}")).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = csv(&["p", "v"], &[vec!["8".into(), cell(0.5)]]);
        assert_eq!(s.lines().next(), Some(CSV_SCHEMA));
        assert_eq!(s.lines().nth(2), Some("8,5.00000000000000000e-1"));
    }
}
