use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::hilbert::C64;

/// One table cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
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

/// Real and imaginary cells of a complex value.
pub fn complex_cells(c: C64) -> [Cell; 2] {
    [Cell::Num(c.re), Cell::Num(c.im)]
}

/// Column names `name_re`, `name_im`.
pub fn complex_columns(name: &str) -> [String; 2] {
    [format!("{name}_re"), format!("{name}_im")]
}

/// Named columns with rows of equal length. Serializes as a list of row
/// objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Table { columns: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    /// Panics if the row length does not match the header; rows are built in
    /// code, so a mismatch is a bug.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row length must match columns {:?}", self.columns);
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numeric values of a column, `None` for non-numeric cells.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[i] {
                    Cell::Num(v) => Some(v),
                    _ => None,
                })
                .collect(),
        )
    }
}

struct Row<'a>(&'a [String], &'a [Cell]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows.len()))?;
        for r in &self.rows {
            seq.serialize_element(&Row(&self.columns, r))?;
        }
        seq.end()
    }
}

/// Check identifiers a verdict may reference. A verdict's `check` is one of
/// these, optionally followed by `@detail`.
pub const CHECKS: &[&str] = &[
    "pointer_mean",
    "weak_value",
    "abl_probability",
    "abl_closed_form",
    "abl_enumeration",
    "ensemble_size",
    "readout",
    "convergence_slope",
    "comb_monotone",
    "comb_improves",
    "comb_local_width",
    "causality_probability",
    "parity_class_ancilla",
    "parity_class_distinct",
    "pointer_distance",
    "correlator_limit",
    "correlator_spread",
    "pooled_estimator_fails",
    "sum_rescue",
    "modprod_precondition",
    "modprod_identity",
];

pub fn is_registered(check: &str) -> bool {
    let base = check.split('@').next().unwrap_or(check);
    CHECKS.contains(&base)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub expected: Value,
    pub measured: Value,
    pub tol: Option<f64>,
    pub pass: bool,
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

impl Verdict {
    fn make(check: String, expected: Value, measured: Value, tol: Option<f64>, pass: bool) -> Self {
        assert!(is_registered(&check), "unregistered check `{check}`");
        Verdict { check, expected, measured, tol, pass }
    }

    /// `|measured − expected| ≤ tol`.
    pub fn within(check: impl Into<String>, expected: f64, measured: f64, tol: f64) -> Self {
        let pass = (measured - expected).abs() <= tol;
        Self::make(check.into(), num(expected), num(measured), Some(tol), pass)
    }

    /// [`Verdict::within`] with `tol = rel·max(1, |expected|)`.
    pub fn close(check: impl Into<String>, expected: f64, measured: f64, rel: f64) -> Self {
        Self::within(check, expected, measured, rel * expected.abs().max(1.0))
    }

    /// `expected/factor ≤ measured ≤ expected·factor`; `tol` records the factor.
    pub fn factor_band(check: impl Into<String>, expected: f64, measured: f64, factor: f64) -> Self {
        let pass = measured >= expected / factor && measured <= expected * factor;
        Self::make(check.into(), num(expected), num(measured), Some(factor), pass)
    }

    /// A qualitative property with a description of what was expected.
    pub fn holds(check: impl Into<String>, expected: &str, measured: Value, pass: bool) -> Self {
        Self::make(check.into(), Value::String(expected.to_string()), measured, None, pass)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub params: serde_json::Map<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, params: serde_json::Map<String, Value>) -> Self {
        ScenarioReport { scenario: scenario.to_string(), params, tables: BTreeMap::new(), verdicts: Vec::new(), notes: Vec::new() }
    }

    pub fn table(&mut self, name: impl Into<String>, table: Table) {
        self.tables.insert(name.into(), table);
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Least-squares slope of `ln y` against `ln x` over the points where both
/// are positive and finite. `None` with fewer than two such points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
