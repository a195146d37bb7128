//! Result tables and their CSV / JSON forms.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precoding::PrecoderKind;
use crate::rates::{Ecdr, Scheme};

pub const CSV_HEADER: [&str; 9] =
    ["sweep_value", "scheme", "precoder", "formula", "ecdr_mean", "ecdr_stderr", "trials", "seed", "infeasible_count"];

/// Text used for an infinite ECDR.
pub const INFINITE_MARKER: &str = "inf";
/// Text used when no finite sample exists (e.g. every trial infeasible).
pub const MISSING_MARKER: &str = "na";

/// Round to nine significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest text that reads back as the nine-digit rounding of `x`.
pub fn format_sig9(x: f64) -> String {
    format!("{}", round_sig9(x))
}

/// A table cell that may hold an explicit marker instead of a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Infinite,
    Missing,
}

impl From<Ecdr> for Value {
    fn from(e: Ecdr) -> Self {
        match e {
            Ecdr::Finite(v) => Value::Num(v),
            Ecdr::Infinite => Value::Infinite,
        }
    }
}

impl Value {
    pub fn num(self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => f.write_str(&format_sig9(*v)),
            Value::Infinite => f.write_str(INFINITE_MARKER),
            Value::Missing => f.write_str(MISSING_MARKER),
        }
    }
}

impl FromStr for Value {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            INFINITE_MARKER => Ok(Value::Infinite),
            MISSING_MARKER => Ok(Value::Missing),
            _ => s.parse().map(Value::Num).map_err(|_| Error::config(format!("'{s}' is not a number"))),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Num(v) => s.serialize_f64(round_sig9(*v)),
            Value::Infinite => s.serialize_str(INFINITE_MARKER),
            Value::Missing => s.serialize_str(MISSING_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Value::Num(v)),
            Raw::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

fn sig9<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*v))
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(serialize_with = "sig9")]
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub precoder: PrecoderKind,
    /// Closed-form identifier, `montecarlo` (tagged user) or
    /// `montecarlo-cell` (cell average).
    pub formula: String,
    pub ecdr_mean: Value,
    #[serde(serialize_with = "sig9")]
    pub ecdr_stderr: f64,
    pub trials: u64,
    pub seed: u64,
    pub infeasible_count: u64,
}

pub const MC_TAGGED: &str = "montecarlo";
pub const MC_CELL: &str = "montecarlo-cell";

impl ResultRow {
    pub fn is_monte_carlo(&self) -> bool {
        self.formula.starts_with(MC_TAGGED)
    }

    fn csv_fields(&self) -> [String; 9] {
        [
            format_sig9(self.sweep_value),
            self.scheme.to_string(),
            self.precoder.to_string(),
            self.formula.clone(),
            self.ecdr_mean.to_string(),
            format_sig9(self.ecdr_stderr),
            self.trials.to_string(),
            self.seed.to_string(),
            self.infeasible_count.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.csv_fields()).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::config(format!("invalid CSV header: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::config("unexpected CSV columns"));
        }
        let parse_err = |what: &str, v: &str| Error::config(format!("invalid {what} '{v}'"));
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::config(format!("invalid CSV record: {e}")))?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let scheme: Scheme = serde_json::from_value(serde_json::Value::String(f(1).into()))
                .map_err(|_| parse_err("scheme", f(1)))?;
            let precoder: PrecoderKind = serde_json::from_value(serde_json::Value::String(f(2).into()))
                .map_err(|_| parse_err("precoder", f(2)))?;
            rows.push(ResultRow {
                sweep_value: f(0).parse().map_err(|_| parse_err("sweep value", f(0)))?,
                scheme,
                precoder,
                formula: f(3).to_string(),
                ecdr_mean: f(4).parse()?,
                ecdr_stderr: f(5).parse().map_err(|_| parse_err("stderr", f(5)))?,
                trials: f(6).parse().map_err(|_| parse_err("trial count", f(6)))?,
                seed: f(7).parse().map_err(|_| parse_err("seed", f(7)))?,
                infeasible_count: f(8).parse().map_err(|_| parse_err("infeasible count", f(8)))?,
            });
        }
        Ok(ResultTable { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid result JSON: {e}")))
    }

    /// Rows with the given formula, scheme and precoder, in sweep order.
    pub fn select<'a>(
        &'a self,
        formula: &'a str,
        scheme: Scheme,
        precoder: PrecoderKind,
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.formula == formula && r.scheme == scheme && r.precoder == precoder)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("unknown output format '{other}'"))),
        }
    }
}

/// Write a table to `path`.
pub fn emit(table: &ResultTable, format: Format, path: &Path) -> Result<()> {
    std::fs::write(path, table.render(format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ResultRow {
        ResultRow {
            sweep_value: 1.1,
            scheme: Scheme::P1,
            precoder: PrecoderKind::Rzf,
            formula: "P1-RZF-LS".into(),
            ecdr_mean: Value::Num(std::f64::consts::PI),
            ecdr_stderr: 0.012_345_678_912_3,
            trials: 2000,
            seed: 7,
            infeasible_count: 0,
        }
    }

    #[test]
    fn sig9_examples() {
        assert_eq!(format_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(123_456_789_123.0), "123456789000");
        assert_eq!(format_sig9(1.1), "1.1");
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = ResultTable::default().to_csv();
        assert_eq!(csv, CSV_HEADER.join(",") + "\n");
        assert_eq!(ResultTable::from_csv(&csv).unwrap(), ResultTable::default());
        assert_eq!(ResultTable::default().to_json().trim(), "[]");
    }

    #[test]
    fn one_row_round_trips() {
        let table = ResultTable { rows: vec![row()] };
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "1.1,P1,RZF,P1-RZF-LS,3.14159265,0.0123456789,2000,7,0");
        let from_csv = ResultTable::from_csv(&csv).unwrap();
        let from_json = ResultTable::from_json(&table.to_json()).unwrap();
        assert_eq!(from_csv, from_json);
        assert_eq!(from_csv.rows[0].ecdr_mean, Value::Num(round_sig9(std::f64::consts::PI)));
        // A second pass is exact.
        assert_eq!(ResultTable::from_csv(&from_csv.to_csv()).unwrap(), from_csv);
    }

    #[test]
    fn markers_round_trip() {
        let mut r = row();
        r.ecdr_mean = Value::Infinite;
        let mut m = row();
        m.ecdr_mean = Value::Missing;
        let table = ResultTable { rows: vec![r, m] };
        assert!(table.to_csv().contains(",inf,"));
        let back = ResultTable::from_json(&table.to_json()).unwrap();
        assert_eq!(back.rows[0].ecdr_mean, Value::Infinite);
        assert_eq!(back.rows[1].ecdr_mean, Value::Missing);
        assert_eq!(ResultTable::from_csv(&table.to_csv()).unwrap().rows[1].ecdr_mean, Value::Missing);
    }

    #[test]
    fn unwritable_path_reports_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        match emit(&ResultTable::default(), Format::Csv, &path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected an I/O error, got {other:?}"),
        }
    }
}
