//! CSV tables with a leading schema comment.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// Written as `# schema: <id>` before the header.
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: impl Into<String>, header: &[&str]) -> Self {
        Self {
            schema: schema.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema: {}", self.schema)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for r in &self.rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
