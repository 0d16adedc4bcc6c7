//! Deterministic CSV tables: fixed column order, unit annotations in a
//! header comment, and reproducible float formatting. Identical inputs
//! always produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColKind {
    Int,
    Float,
    Str,
    Bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
    pub kind: ColKind,
}

pub const fn col(name: &'static str, unit: &'static str, kind: ColKind) -> Column {
    Column { name, unit, kind }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl Cell {
    fn kind(&self) -> ColKind {
        match self {
            Cell::Int(_) => ColKind::Int,
            Cell::Float(_) => ColKind::Float,
            Cell::Str(_) => ColKind::Str,
            Cell::Bool(_) => ColKind::Bool,
        }
    }
}

/// Scientific notation with nine digits after the point. One digit more
/// than the nominal nine significant figures, so values near the top of a
/// decade still round-trip within 1e-9.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.9e}")
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub schema: &'static [Column],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: &'static [Column]) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.schema.len(), "row arity mismatch");
        for (cell, column) in row.iter().zip(self.schema) {
            assert_eq!(cell.kind(), column.kind, "column {} kind mismatch", column.name);
            if let Cell::Str(s) = cell {
                assert!(
                    !s.contains([',', '\n', '\r']),
                    "string cell for {} needs quoting: {s:?}",
                    column.name
                );
            }
        }
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let units = self
            .schema
            .iter()
            .map(|c| format!("{} [{}]", c.name, c.unit))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "# units: {units}");
        let header = self
            .schema
            .iter()
            .map(|c| c.name)
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "{header}");
        for row in &self.rows {
            let line = row
                .iter()
                .map(|cell| match cell {
                    Cell::Int(v) => v.to_string(),
                    Cell::Float(v) => format_float(*v),
                    Cell::Str(v) => v.clone(),
                    Cell::Bool(v) => v.to_string(),
                })
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv_string())
    }

    /// Parse a table previously produced by `to_csv_string`.
    pub fn parse(text: &str, schema: &'static [Column]) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().ok_or("missing header line")?;
        let want: Vec<&str> = schema.iter().map(|c| c.name).collect();
        let got: Vec<&str> = header.split(',').collect();
        if got != want {
            return Err(format!("header mismatch: expected {want:?}, got {got:?}"));
        }
        let mut table = Table::new(schema);
        for (line_no, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != schema.len() {
                return Err(format!("row {line_no}: expected {} fields", schema.len()));
            }
            let mut row = Vec::with_capacity(fields.len());
            for (field, column) in fields.iter().zip(schema) {
                let cell = match column.kind {
                    ColKind::Int => Cell::Int(
                        field
                            .parse()
                            .map_err(|e| format!("row {line_no}, {}: {e}", column.name))?,
                    ),
                    ColKind::Float => Cell::Float(
                        field
                            .parse()
                            .map_err(|e| format!("row {line_no}, {}: {e}", column.name))?,
                    ),
                    ColKind::Bool => Cell::Bool(
                        field
                            .parse()
                            .map_err(|e| format!("row {line_no}, {}: {e}", column.name))?,
                    ),
                    ColKind::Str => Cell::Str(field.to_string()),
                };
                row.push(cell);
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}
