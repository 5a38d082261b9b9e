//! Versioned CSV files and atomic output.
//!
//! Every CSV starts with a `# format: <name>/<version>` line followed by
//! the column header. Readers skip `#` lines and report parse failures
//! with their 1-based row number.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use rdsim::scan::ScanRecord;

/// Incremental writer for one versioned CSV table.
pub struct CsvTable {
    buf: String,
}

impl CsvTable {
    pub fn new(format: &str, version: u32, header: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# format: {format}/{version}");
        let _ = writeln!(buf, "{header}");
        Self { buf }
    }

    pub fn row(&mut self, fields: &[f64]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{f}");
            first = false;
        }
        self.buf.push('\n');
    }

    pub fn row_indexed(&mut self, index: usize, fields: &[f64]) {
        let _ = write!(self.buf, "{index}");
        for f in fields {
            let _ = write!(self.buf, ",{f}");
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json_atomic<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, &text)
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
        .skip(1) // column header
}

fn parse_field(field: &str, row: usize, name: &str) -> Result<f64> {
    field
        .parse()
        .with_context(|| format!("row {row}: invalid {name} value {field:?}"))
}

/// Read a `scan` CSV (`index,delta,j_cos,j_sin`).
pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scan file {}", path.display()))?;
    let mut records = Vec::new();
    for (row, line) in data_rows(&text) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!(
                "{}: row {row}: expected 4 columns (index,delta,j_cos,j_sin), got {}",
                path.display(),
                fields.len()
            );
        }
        records.push(ScanRecord {
            index: fields[0]
                .parse()
                .with_context(|| format!("row {row}: invalid index {:?}", fields[0]))?,
            delta: parse_field(fields[1], row, "delta")?,
            j_cos: parse_field(fields[2], row, "j_cos")?,
            j_sin: parse_field(fields[3], row, "j_sin")?,
        });
    }
    if records.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(records)
}

/// Read a `dc` CSV (`grid,value`).
pub fn read_dc_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading dc file {}", path.display()))?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (row, line) in data_rows(&text) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            bail!(
                "{}: row {row}: expected 2 columns (grid,value), got {}",
                path.display(),
                fields.len()
            );
        }
        grid.push(parse_field(fields[0], row, "grid")?);
        values.push(parse_field(fields[1], row, "value")?);
    }
    if grid.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok((grid, values))
}
