//! Command results: a JSON summary plus optional CSV tables.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::Value;

use crate::config::OutputFormat;

pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn nums(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| num(*x))
}

pub struct Report {
    pub summary: Value,
    pub tables: Vec<Table>,
    /// Exit code 4 when set.
    pub violation: bool,
}

impl Report {
    pub fn new(summary: Value) -> Self {
        Self {
            summary,
            tables: Vec::new(),
            violation: false,
        }
    }
}

/// Creates `path`, refusing to touch a file that already exists unless
/// `force` is set.
fn create(path: &Path, force: bool) -> anyhow::Result<std::fs::File> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    opts.open(path).with_context(|| {
        if path.exists() && !force {
            format!("{} exists; pass --force to overwrite", path.display())
        } else {
            format!("cannot create {}", path.display())
        }
    })
}

pub fn write_artifacts(
    command: &str,
    full: &Value,
    report: &Report,
    format: OutputFormat,
    out: Option<&Path>,
    force: bool,
) -> anyhow::Result<Vec<String>> {
    let Some(dir) = out else {
        if format != OutputFormat::Json {
            bail!(crate::UsageError(
                "--format csv|both needs --out DIR".into()
            ));
        }
        return Ok(Vec::new());
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let path = dir.join(format!("{command}.json"));
        let mut f = create(&path, force)?;
        writeln!(f, "{}", serde_json::to_string_pretty(full)?)?;
        written.push(path.display().to_string());
    }
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        for t in &report.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_writer(create(&path, force)?);
            w.write_record(&t.headers)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
            written.push(path.display().to_string());
        }
    }
    Ok(written)
}
