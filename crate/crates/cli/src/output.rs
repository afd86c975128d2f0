//! Plain CSV tables with a canonical number format.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), integers as
//! integers and undefined values as empty fields. Parsing a file and writing
//! it back reproduces it byte for byte.

use simplex_sde::state::Ensemble;
use simplex_sde::{MomentRates, MomentSet, Snapshot};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Num(v) => Some(v),
            Cell::Empty => None,
        }
    }

    fn write(&self, out: &mut String) {
        match *self {
            Cell::Int(i) => write!(out, "{i}").unwrap(),
            Cell::Num(v) => write!(out, "{v:.16e}").unwrap(),
            Cell::Empty => {}
        }
    }

    fn parse(field: &str) -> Result<Cell, CsvError> {
        if field.is_empty() {
            return Ok(Cell::Empty);
        }
        if field.bytes().all(|b| b.is_ascii_digit()) {
            return field.parse().map(Cell::Int).map_err(|_| CsvError::BadField(field.to_string()));
        }
        field.parse().map(Cell::Num).map_err(|_| CsvError::BadField(field.to_string()))
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as u64)
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("empty CSV input")]
    Empty,
    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("cannot parse field {0:?}")]
    BadField(String),
    #[error("no column named {0}")]
    NoColumn(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
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
        out
    }

    pub fn parse(text: &str) -> Result<Self, CsvError> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().ok_or(CsvError::Empty)?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line.split(',').map(Cell::parse).collect::<Result<Vec<_>, _>>()?;
            if row.len() != header.len() {
                return Err(CsvError::Ragged { row: i + 1, found: row.len(), expected: header.len() });
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, CsvError> {
        let j = self.header.iter().position(|h| h == name).ok_or_else(|| CsvError::NoColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |a| format!("{prefix}_{a}"))
}

fn pairs(prefix: &str, n: usize) -> Vec<String> {
    let mut v = Vec::new();
    for a in 1..=n {
        for b in a..=n {
            v.push(format!("{prefix}_{a}_{b}"));
        }
    }
    v
}

fn upper(m: &simplex_sde::SquareMatrix) -> impl Iterator<Item = Cell> + '_ {
    let n = m.dim();
    (0..n).flat_map(move |a| (a..n).map(move |b| Cell::Num(m[(a, b)])))
}

pub fn moments_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "step".to_string()];
    h.extend(indexed("mean", n));
    h.extend(pairs("cov", n));
    h.extend(indexed("third", n));
    h.extend(indexed("fourth", n));
    h.extend(indexed("skewness", n));
    h.extend(indexed("kurtosis", n));
    h
}

pub fn moments_row(t: f64, step: u64, m: &MomentSet) -> Vec<Cell> {
    let mut r = vec![Cell::Num(t), Cell::Int(step)];
    r.extend(m.mean.iter().map(|&v| Cell::Num(v)));
    r.extend(upper(&m.covariance));
    r.extend(m.third.iter().map(|&v| Cell::Num(v)));
    r.extend(m.fourth.iter().map(|&v| Cell::Num(v)));
    r.extend(m.skewness.iter().map(|&v| Cell::from(v)));
    r.extend(m.kurtosis.iter().map(|&v| Cell::from(v)));
    r
}

pub fn rates_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "step".to_string()];
    h.extend(indexed("mean_rate", n));
    h.extend(pairs("cov_rate", n));
    h.extend(indexed("third_rate", n));
    h.extend(indexed("fourth_rate", n));
    h.extend(indexed("third_rate_variant", n));
    h.extend(indexed("fourth_rate_variant", n));
    h
}

pub fn rates_row(t: f64, step: u64, r: &MomentRates) -> Vec<Cell> {
    let mut row = vec![Cell::Num(t), Cell::Int(step)];
    row.extend(r.mean_rate.iter().map(|&v| Cell::Num(v)));
    row.extend(upper(&r.cov_rate));
    for v in [&r.third_rate, &r.fourth_rate, &r.third_rate_variant, &r.fourth_rate_variant] {
        row.extend(v.iter().map(|&x| Cell::Num(x)));
    }
    row
}

pub fn moments_table(snaps: &[Snapshot]) -> CsvTable {
    let n = snaps[0].moments.dim();
    let mut t = CsvTable::new(moments_header(n));
    for s in snaps {
        t.push(moments_row(s.time, s.step, &s.moments));
    }
    t
}

pub fn rates_table(snaps: &[Snapshot]) -> CsvTable {
    let n = snaps[0].moments.dim();
    let mut t = CsvTable::new(rates_header(n));
    for s in snaps {
        t.push(rates_row(s.time, s.step, &s.rates));
    }
    t
}

pub fn ensemble_table(ens: &Ensemble) -> CsvTable {
    let mut t = CsvTable::new(indexed("y", ens.dim()).collect());
    for row in ens.rows() {
        t.push(row.iter().map(|&v| Cell::Num(v)).collect());
    }
    t
}

/// File name for an ensemble dump at time `t`.
pub fn ensemble_file_name(t: f64) -> String {
    format!("ensemble_{t:.6}.csv")
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
