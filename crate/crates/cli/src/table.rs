use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// One CSV cell. Floats print in shortest round-trip form (exponent for
/// very large or small magnitudes); missing values are empty.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v:?}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

/// `#` metadata lines, a header, rows, then `#` trailer lines. Only the
/// trailer carries wall-clock data.
#[derive(Debug, Default)]
pub struct Table {
    meta: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    trailer: Vec<String>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            ..Default::default()
        }
    }

    pub fn meta(&mut self, line: impl Into<String>) {
        self.meta.push(line.into());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn trailer(&mut self, line: impl Into<String>) {
        self.trailer.push(line.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for m in &self.meta {
            let _ = writeln!(s, "# {m}");
        }
        let _ = writeln!(s, "{}", self.columns.join(", "));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(", "));
        }
        for t in &self.trailer {
            let _ = writeln!(s, "# {t}");
        }
        s
    }

    /// Writes to `path`, or stdout when there is none.
    pub fn write(&self, path: Option<&Path>) -> io::Result<()> {
        let text = self.render();
        match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                fs::write(p, text)
            }
            None => io::stdout().lock().write_all(text.as_bytes()),
        }
    }
}
