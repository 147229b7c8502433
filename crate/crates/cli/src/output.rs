use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pcq_core::GridFunction;
use serde::Serialize;

/// Writes reports and tables below one output directory.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn field(&self, name: &str, g: &GridFunction) -> Result<()> {
        self.write(name, &g.to_csv())
    }

    /// CSV with the given header; every row must have one entry per column.
    pub fn table<R: AsRef<[String]>>(&self, name: &str, header: &[&str], rows: &[R]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let row = row.as_ref();
            debug_assert_eq!(row.len(), header.len());
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }
}

/// Shortest round-trip representation, so tables are byte-stable.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
