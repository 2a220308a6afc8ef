//! Patient-by-feature matrices with named columns, stored row-major, and
//! their CSV form (`patient_id,<names…>`).

use std::collections::HashSet;
use std::path::Path;

use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    names: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * names.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows x {} columns",
                data.len(),
                ids.len(),
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Schema(format!("duplicate column `{dup}`")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let p = names.len();
            return Err(Error::Numeric(format!(
                "non-finite value at row `{}`, column `{}`",
                ids[i / p],
                names[i % p]
            )));
        }
        Ok(FeatureMatrix { ids, names, data })
    }

    pub fn from_rows(ids: Vec<String>, names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Shape(format!("row {r} has {} values, expected {p}", rows[r].len())));
        }
        FeatureMatrix::new(ids, names, rows.concat())
    }

    /// Rows named `row0..`, columns `f0..`.
    pub fn anonymous(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        FeatureMatrix::new(
            (0..n).map(|i| format!("row{i}")).collect(),
            (0..p).map(|j| format!("f{j}")).collect(),
            data,
        )
    }

    pub fn nrows(&self) -> usize {
        self.ids.len()
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.ncols().max(1)).take(self.nrows())
    }

    /// Keeps the rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let ids = idx.iter().map(|&i| self.ids[i].clone()).collect();
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        FeatureMatrix::new(ids, self.names.clone(), data)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        FeatureMatrix::from_csv_reader(file).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(path, msg),
            other => other,
        })
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err("<csv>", e.to_string()))?
            .clone();
        if header.get(0).map(str::trim) != Some("patient_id") {
            return Err(parse_err("<csv>", "first header column must be `patient_id`"));
        }
        let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut seen = HashSet::new();
        for (r, rec) in rdr.records().enumerate() {
            let line = r + 2;
            let rec = rec.map_err(|e| parse_err("<csv>", format!("line {line}: {e}")))?;
            if rec.len() != names.len() + 1 {
                return Err(parse_err(
                    "<csv>",
                    format!("line {line}: {} fields, expected {}", rec.len(), names.len() + 1),
                ));
            }
            let id = rec[0].trim().to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    parse_err("<csv>", format!("line {line}, column `{}`: `{cell}` is not a number", names[j]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        "<csv>",
                        format!("line {line}, column `{}`: non-finite value", names[j]),
                    ));
                }
                data.push(v);
            }
            ids.push(id);
        }
        FeatureMatrix::new(ids, names, data)
    }

    /// Values use Rust's shortest round-trip formatting, so a read of the
    /// written file reproduces every bit.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("patient_id");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}
