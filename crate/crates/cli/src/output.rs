//! Output bundles: tables as CSV and SVG, reports as JSON.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use tsvflab::scenarios::{Cell, ScenarioReport, Table};

use crate::svg::{chart, Series, Style};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format `{other}` (expected csv, json or svg)")),
        }
    }
}

/// Where and what to write. Files are staged in memory and written only once
/// everything has been rendered.
pub struct OutputBundle {
    pub dir: PathBuf,
    pub formats: BTreeSet<Format>,
    pub overwrite: bool,
    files: Vec<(PathBuf, String)>,
}

impl OutputBundle {
    pub fn new(dir: PathBuf, formats: BTreeSet<Format>, overwrite: bool) -> Result<Self> {
        if formats.is_empty() {
            bail!("at least one output format is required");
        }
        Ok(OutputBundle { dir, formats, overwrite, files: Vec::new() })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn stage(&mut self, rel: impl AsRef<Path>, contents: String) {
        self.files.push((self.dir.join(rel), contents));
    }

    /// CSV and/or SVG for one table, as requested.
    pub fn stage_table(&mut self, sub: &Path, name: &str, table: &Table) -> Result<()> {
        if self.wants(Format::Csv) {
            self.stage(sub.join(format!("{name}.csv")), table_csv(table)?);
        }
        if self.wants(Format::Svg) {
            if let Some(svg) = table_svg(name, table) {
                self.stage(sub.join(format!("{name}.svg")), svg);
            }
        }
        Ok(())
    }

    /// `report.json` is always written; tables follow the requested formats.
    pub fn stage_report(&mut self, report: &ScenarioReport) -> Result<()> {
        let sub = PathBuf::from(&report.scenario);
        self.stage(sub.join("report.json"), report.to_json() + "\n");
        for (name, table) in &report.tables {
            self.stage_table(&sub, name, table)?;
        }
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        if !self.overwrite {
            if let Some((p, _)) = self.files.iter().find(|(p, _)| p.exists()) {
                let msg = format!("refusing to overwrite {}", p.display());
                return Err(std::io::Error::new(std::io::ErrorKind::AlreadyExists, msg).into());
            }
        }
        let mut written = Vec::new();
        for (path, contents) in self.files {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn table_csv(table: &Table) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(table.columns())?;
    for row in table.rows() {
        let rec: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format_num(*v),
                Cell::Bool(b) => b.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Line chart of every numeric column against the first, or an area chart for
/// density tables. `None` when the first column is not numeric.
pub fn table_svg(name: &str, table: &Table) -> Option<String> {
    let cols = table.columns();
    let x = table.column(&cols[0])?;
    if x.iter().any(Option::is_none) || x.len() < 2 {
        return None;
    }
    let x: Vec<f64> = x.into_iter().flatten().collect();
    let series: Vec<Series> = cols[1..]
        .iter()
        .filter_map(|c| {
            let y = table.column(c)?;
            if y.iter().all(|v| !v.is_some_and(f64::is_finite)) {
                return None;
            }
            let points = x.iter().zip(&y).filter_map(|(&a, b)| b.map(|b| (a, b))).collect();
            Some(Series { name: c.clone(), points })
        })
        .collect();
    if series.is_empty() {
        return None;
    }
    let density = name.starts_with("density");
    let positive = x.iter().all(|&v| v > 0.0);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let log_x = !density && positive && hi / lo >= 100.0;
    let style = if density { Style::Area } else { Style::Line };
    Some(chart(name, &cols[0], &series, style, log_x))
}
