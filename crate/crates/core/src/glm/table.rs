//! Delimited tables in, coefficient tables out.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Dataset, GlmFit};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "Intercept";

/// A header row plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Reads a comma- or tab-delimited table; the delimiter is taken from
    /// the header line.
    pub fn read<R: Read>(mut input: R) -> Result<Table> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let first = text.lines().next().unwrap_or_default();
        let delimiter = if first.contains('\t') { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, rows })
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::read(std::fs::File::open(path)?)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Shape(format!("no column named `{name}`")))
    }

    pub fn column_str(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r[j].as_str();
                match cell.to_ascii_lowercase().as_str() {
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    _ => cell.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("row {}: column `{name}` has non-numeric cell `{cell}`", i + 1))
                    }),
                }
            })
            .collect()
    }
}

/// Column selection for building a design matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSpec {
    pub response: String,
    pub predictors: Vec<String>,
    /// Products of two predictor columns, named `a:b`.
    pub interactions: Vec<(String, String)>,
    pub subject: Option<String>,
    pub no_intercept: bool,
}

impl ModelSpec {
    pub fn new(response: impl Into<String>) -> Self {
        ModelSpec {
            response: response.into(),
            ..ModelSpec::default()
        }
    }

    /// Parses `a:b` into an interaction pair.
    pub fn parse_interaction(s: &str) -> Result<(String, String)> {
        match s.split_once(':') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Ok((a.trim().to_string(), b.trim().to_string()))
            }
            _ => Err(Error::InvalidConfig(format!("interaction `{s}` must look like `a:b`"))),
        }
    }

    pub fn dataset(&self, table: &Table) -> Result<Dataset> {
        let n = table.rows.len();
        let mut names = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if !self.no_intercept {
            names.push(INTERCEPT.to_string());
            cols.push(vec![1.0; n]);
        }
        for p in &self.predictors {
            names.push(p.clone());
            cols.push(table.column_f64(p)?);
        }
        for (a, b) in &self.interactions {
            let ca = table.column_f64(a)?;
            let cb = table.column_f64(b)?;
            names.push(format!("{a}:{b}"));
            cols.push(ca.iter().zip(&cb).map(|(x, y)| x * y).collect());
        }
        if names.is_empty() {
            return Err(Error::InvalidConfig("model has no design columns".into()));
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let y = DVector::from_vec(table.column_f64(&self.response)?);
        let data = Dataset::new(names, x, y)?;
        match &self.subject {
            Some(col) => data.with_subjects(&table.column_str(col)?),
            None => Ok(data),
        }
    }
}

/// Writes `name, estimate, se, lower, upper` for the coefficients and any
/// auxiliary parameters (`phi`, `sigma`, `hu`). Intervals are normal on the
/// coefficient scale.
pub fn write_coefficient_table<W: Write>(fit: &GlmFit, level: f64, out: W) -> Result<()> {
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "estimate", "se", "lower", "upper"])?;
    let mut row = |name: &str, est: f64, se: f64| {
        w.write_record([
            name.to_string(),
            format!("{est:?}"),
            format!("{se:?}"),
            format!("{:?}", est - z * se),
            format!("{:?}", est + z * se),
        ])
    };
    for (i, name) in fit.names.iter().enumerate() {
        row(name, fit.beta[i], fit.se[i])?;
    }
    for (name, s) in [("phi", fit.phi), ("sigma", fit.sigma), ("hu", fit.hu)] {
        if let Some(s) = s {
            row(name, s.estimate, s.se)?;
        }
    }
    w.flush()?;
    Ok(())
}
