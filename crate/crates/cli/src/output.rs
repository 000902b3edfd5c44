//! Atomic file writing and minimal CSV assembly.
//!
//! Outputs are written to a temporary sibling and renamed into place, so a
//! failed run never leaves a partially written artifact. All content is
//! byte-deterministic for fixed inputs: no timestamps, map iteration in
//! key order, shortest-round-trip float formatting.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

/// Write-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Row-oriented CSV builder with minimal quoting.
#[derive(Default)]
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        let mut csv = Csv::default();
        csv.row(header.iter().map(|s| s.to_string()));
        csv
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut first = true;
        for field in fields {
            if !first {
                self.out.push(',');
            }
            first = false;
            self.out.push_str(&escape(&field));
        }
        self.out.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        let mut quoted = String::with_capacity(field.len() + 2);
        quoted.push('"');
        for c in field.chars() {
            if c == '"' {
                quoted.push('"');
            }
            quoted.push(c);
        }
        quoted.push('"');
        quoted
    } else {
        field.to_string()
    }
}

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").expect("formatting f64");
    s
}
