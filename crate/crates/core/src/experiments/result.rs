use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::RunConfig;

pub const TOOL_NAME: &str = "resnet-spectra";

/// JSON object on the first line of every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultHeader {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub timestamp: Option<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            Cell::Text(_) => None,
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            Cell::Int(i) => write!(out, "{i}").unwrap(),
            // Shortest representation that round-trips.
            Cell::Float(f) => write!(out, "{f}").unwrap(),
            Cell::Text(s) => out.push_str(s),
        }
    }
}

/// A CSV table headed by a `#`-prefixed JSON line describing the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultFile {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column.
    pub fn values(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(i) => self.rows.iter().filter_map(|r| r[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn render(&self, header: &ResultHeader) -> Result<String> {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&serde_json::to_string(header)?);
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.write(&mut out);
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_to(&self, dir: &Path, header: &ResultHeader) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(&self.name);
        std::fs::write(&path, self.render(header)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_reparse_header() {
        let mut f = ResultFile::new("x.csv", &["a", "b", "c"]);
        f.push(vec![1usize.into(), 0.1f64.into(), "relu".into()]);
        let header = ResultHeader {
            tool: TOOL_NAME.into(),
            version: "0".into(),
            command: "scree".into(),
            timestamp: Some("t".into()),
            config: RunConfig::default(),
        };
        let text = f.render(&header).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "a,b,c");
        assert_eq!(lines[2], "1,0.1,relu");
        assert_eq!(RunConfig::from_text(&text).unwrap(), RunConfig::default());
        assert_eq!(f.values("b"), vec![0.1]);
    }
}
