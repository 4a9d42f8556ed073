use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version and config hash, written ahead of every report.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

impl Meta {
    /// Hashes the canonical JSON of whatever determines the output.
    pub fn new(config: &impl Serialize) -> Result<Self> {
        let text = serde_json::to_string(config)?;
        Ok(Meta { tool: "mevsearch", version: VERSION, config_hash: hex::encode(Sha256::digest(text.as_bytes())) })
    }

    pub fn comment_header(&self) -> String {
        format!("# {} {}\n# config sha256:{}\n", self.tool, self.version, self.config_hash)
    }
}

pub fn csv_text<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Header comments, extra `# key value` notes, then the CSV body.
pub fn csv_report(meta: &Meta, notes: &[(String, String)], body: &str) -> String {
    let mut s = meta.comment_header();
    for (k, v) in notes {
        s.push_str(&format!("# {k} {v}\n"));
    }
    s.push_str(body);
    s
}

pub fn json_report(meta: &Meta, report: &impl Serialize) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a Meta,
        report: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { meta, report })?;
    s.push('\n');
    Ok(s)
}

/// Writes to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())?;
            Ok(o.flush()?)
        }
    }
}
