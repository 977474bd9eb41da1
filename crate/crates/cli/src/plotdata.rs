//! The `plotdata` command: selected diagnostics columns as long-format
//! (t, value, series) triples, with log10 companions for norms and energies.

use std::path::Path;

use crate::error::CliError;
use crate::run::DIAGNOSTICS_FILE;

/// Parsed diagnostics CSV: column names plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let malformed = |message: String| CliError::MalformedCsv { path: path.to_path_buf(), message };
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| malformed("no header line".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| malformed(format!("row {}: {e}", i + 1)))?;
            if row.len() != columns.len() {
                return Err(malformed(format!("row {} has {} values, header has {}", i + 1, row.len(), columns.len())));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(DIAGNOSTICS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Self::parse(&text, &path)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Expands the `all-energies` and `all-norms` aliases and checks that every
/// requested column exists.
pub fn resolve_quantities(table: &Table, requested: &[String]) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for q in requested {
        let prefix = match q.as_str() {
            "all-energies" => Some("E_"),
            "all-norms" => Some("S_"),
            _ => None,
        };
        match prefix {
            Some(p) => out.extend(table.columns.iter().filter(|c| c.starts_with(p)).cloned()),
            None if table.columns.contains(q) => out.push(q.clone()),
            None => missing.push(q.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingColumn { missing, available: table.columns.clone() });
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|q| seen.insert(q.clone()));
    Ok(out)
}

fn is_decay_quantity(name: &str) -> bool {
    name.starts_with("S_") || name.starts_with("E_")
}

/// Long-format text with a `t,value,series` header. Decay quantities get a
/// `log10(name)` companion series over their positive samples.
pub fn long_format(table: &Table, quantities: &[String]) -> String {
    let t = table.column("t").unwrap_or_default();
    let mut out = String::from("t,value,series\n");
    for q in quantities {
        let values = table.column(q).expect("resolved");
        for (ti, v) in t.iter().zip(&values) {
            out.push_str(&format!("{ti},{v},{q}\n"));
        }
        if is_decay_quantity(q) {
            for (ti, v) in t.iter().zip(&values) {
                if *v > 0.0 {
                    out.push_str(&format!("{ti},{},log10({q})\n", v.log10()));
                }
            }
        }
    }
    out
}

pub fn execute(dir: &Path, quantities: &[String]) -> Result<String, CliError> {
    let table = Table::load(dir)?;
    let resolved = resolve_quantities(&table, quantities)?;
    Ok(long_format(&table, &resolved))
}
