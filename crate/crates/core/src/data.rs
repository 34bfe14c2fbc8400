//! Column-oriented numeric datasets and headered CSV I/O.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidData(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column `{n}`")));
            }
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::InvalidData("columns have different lengths".into()));
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut columns = vec![Vec::with_capacity(rows.len()); names.len()];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} values, expected {}",
                    r + 1,
                    row.len(),
                    names.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                columns[c].push(*v);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index(name)?])
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn select(&self, names: &[&str]) -> Result<Dataset> {
        let columns = names
            .iter()
            .map(|n| self.column(n).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(names.iter().map(|s| s.to_string()).collect(), columns)
    }

    pub fn rename(&mut self, from: &str, to: &str) -> Result<()> {
        let i = self.index(from)?;
        if from != to && self.names.iter().any(|n| n == to) {
            return Err(Error::InvalidData(format!("column `{to}` already exists")));
        }
        self.names[i] = to.to_string();
        Ok(())
    }

    /// True when every value of the column is exactly 0 or 1.
    pub fn is_binary(&self, name: &str) -> Result<bool> {
        Ok(self.column(name)?.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Dataset::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::InvalidData(format!("CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(Error::InvalidData("CSV header row is required".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidData(format!("CSV row {}: {e}", r + 2)))?;
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "line {}, column `{}`: `{field}` is not a number",
                        r + 2,
                        names[c]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "line {}, column `{}`: non-finite value",
                        r + 2,
                        names[c]
                    )));
                }
                columns[c].push(v);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Writes `,`-delimited, LF-terminated CSV. Binary columns are written as
    /// `0`/`1` literals.
    pub fn write_csv_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows() {
            line.clear();
            for (c, col) in self.columns.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", col[i]));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}
