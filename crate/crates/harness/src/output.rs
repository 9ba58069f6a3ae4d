//! Per-run output directory, CSV tables and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A table with a header row; every cell is already formatted.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner()?)
    }

    pub fn to_markdown(&self) -> String {
        let mut o = format!("| {} |\n|{}|\n", self.header.join(" | "), vec!["---"; self.header.len()].join("|"));
        for r in &self.rows {
            let _ = writeln!(o, "| {} |", r.join(" | "));
        }
        o
    }
}

/// Shortest representation that parses back to the same value; exponent
/// form for very small or very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Human summary of one experiment: headline values, tables and whether
/// the run found the system unstable.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub values: Vec<(String, String)>,
    pub tables: Vec<(String, Table)>,
    pub notes: Vec<String>,
    /// Set by experiments that judge stability.
    pub unstable: Option<bool>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Self::default() }
    }

    pub fn value(&mut self, key: &str, v: impl ToString) {
        self.values.push((key.into(), v.to_string()));
    }

    pub fn table(&mut self, caption: &str, t: Table) {
        self.tables.push((caption.into(), t));
    }

    pub fn to_markdown(&self, files: &[String]) -> String {
        let mut o = format!("# {}\n\n", self.title);
        for (k, v) in &self.values {
            let _ = writeln!(o, "- {k}: {v}");
        }
        for n in &self.notes {
            let _ = writeln!(o, "- note: {n}");
        }
        for (caption, t) in &self.tables {
            let _ = write!(o, "\n## {caption}\n\n{}", t.to_markdown());
        }
        let _ = writeln!(o, "\n## Artifacts\n");
        for f in files {
            let _ = writeln!(o, "- {f}");
        }
        o
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub library: String,
    pub scenario: String,
    pub experiment: String,
    pub inputs: Vec<FileEntry>,
    pub summary: BTreeMap<String, String>,
    pub exit_status: i32,
    pub files: Vec<FileEntry>,
}

/// Directory owned by one run. Files are written as they are added; the
/// manifest and report are written by [`RunDir::finish`].
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
    inputs: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new(), inputs: vec![] })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.into(), FileEntry { path: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.to_csv()?)
    }

    /// Records an input by name and digest without copying it.
    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(FileEntry { path: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }

    pub fn file_names(&self) -> Vec<String> {
        self.files.keys().cloned().collect()
    }

    pub fn finish(mut self, scenario: &str, experiment: &str, report: &Report, exit_status: i32) -> Result<PathBuf> {
        let mut names = self.file_names();
        names.push("report.md".into());
        names.sort();
        let md = report.to_markdown(&names);
        self.write("report.md", md.as_bytes())?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            library: format!("psstune {}", psstune_version()),
            scenario: scenario.into(),
            experiment: experiment.into(),
            inputs: self.inputs.clone(),
            summary: report.values.iter().cloned().collect(),
            exit_status,
            files: self.files.values().cloned().collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(self.root)
    }
}

fn psstune_version() -> &'static str {
    // the library is a path dependency released in lockstep
    env!("CARGO_PKG_VERSION")
}
