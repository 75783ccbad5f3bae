//! `varjet-report/1` documents and the plotting CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use varjet::{AllwrightReport, Eq8Report, Mat};

pub const REPORT_FORMAT: &str = "varjet-report/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format: &'static str,
    pub tool: Tool,
    pub command: String,
    /// `sha256:<hex>` of every input document, in argument order.
    pub input_digest: Vec<String>,
    pub seed: Option<u64>,
    pub parameters: Map<String, Value>,
    pub tolerances: Map<String, Value>,
    pub verdicts: Map<String, Value>,
    pub data: Map<String, Value>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            format: REPORT_FORMAT,
            tool: Tool {
                name: "varjet",
                version: env!("CARGO_PKG_VERSION"),
            },
            command: command.to_string(),
            input_digest: Vec::new(),
            seed: None,
            parameters: Map::new(),
            tolerances: Map::new(),
            verdicts: Map::new(),
            data: Map::new(),
            timestamp: now(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), to_value(value));
        self
    }

    pub fn tolerance(&mut self, key: &str, value: f64) -> &mut Self {
        self.tolerances.insert(key.to_string(), json!(value));
        self
    }

    pub fn verdict(&mut self, key: &str, value: bool) -> &mut Self {
        self.verdicts.insert(key.to_string(), json!(value));
        self
    }

    pub fn datum(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.data.insert(key.to_string(), to_value(value));
        self
    }

    /// Merges the entries of a JSON object into `data`.
    pub fn extend_data(&mut self, value: Value) -> &mut Self {
        if let Value::Object(m) = value {
            self.data.extend(m);
        }
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes to `path`, or to stdout when `None`.
    pub fn write(&self, path: Option<&Path>) -> io::Result<()> {
        let body = self.to_json();
        match path {
            Some(p) => fs::write(p, body),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()
            }
        }
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report value serializes")
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn mat_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row_slice(i).to_vec()).collect()
}

/// CSV with header `t,residual,scale`, one row per sample.
pub fn csv(t: &[f64], residual: &[f64], scale: &[f64]) -> String {
    let mut out = String::from("t,residual,scale\n");
    for ((t, r), s) in t.iter().zip(residual).zip(scale) {
        let _ = writeln!(out, "{t:?},{r:?},{s:?}");
    }
    out
}

pub fn write_csv(path: &Path, t: &[f64], residual: &[f64], scale: &[f64]) -> io::Result<()> {
    fs::write(path, csv(t, residual, scale))
}

pub fn allwright_data(r: &AllwrightReport<f64>) -> Value {
    let normalized: Vec<f64> = r
        .residual_norm
        .iter()
        .zip(&r.scale)
        .map(|(res, s)| res / (1.0 + s))
        .collect();
    json!({
        "samples": r.len(),
        "t": r.t,
        "residual": r.residual_norm,
        "scale": r.scale,
        "normalized": normalized,
        "i2_norm": r.i2_norm,
        "lhs": r.lhs,
        "rhs": r.rhs,
        "summary": {
            "max_residual": r.max_residual(),
            "max_normalized": r.max_normalized(),
            "max_scale": r.max_scale(),
            "max_i2_norm": r.max_i2(),
        },
    })
}

pub fn eq8_data(r: &Eq8Report<f64>) -> Value {
    json!({
        "samples": r.t.len(),
        "t": r.t,
        "residual": r.residual,
        "scale": r.scale,
        "summary": { "max_residual": r.max() },
    })
}
