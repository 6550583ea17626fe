//! Row-oriented run reports and their CSV/JSON emission.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so equal inputs
//! give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
    /// Not evaluated, for a reason that is not an error (e.g. an unresolvable grid).
    Skipped,
}

/// One asserted inequality `lhs <= rhs` with the hypotheses it rests on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Rounding allowance added to `rhs`.
    pub floor: f64,
    pub hypotheses: BTreeMap<String, bool>,
    pub hypotheses_hold: bool,
    pub holds: bool,
}

impl Check {
    pub fn violated(&self) -> bool {
        self.hypotheses_hold && !self.holds
    }

    fn verdict(&self) -> &'static str {
        match (self.hypotheses_hold, self.holds) {
            (false, _) => "n/a",
            (true, true) => "pass",
            (true, false) => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub index: usize,
    pub status: RowStatus,
    pub error: Option<String>,
    pub values: Vec<(String, Cell)>,
    pub checks: Vec<Check>,
}

impl Row {
    pub fn new(index: usize) -> Self {
        Self { index, status: RowStatus::Ok, error: None, values: Vec::new(), checks: Vec::new() }
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.values.push((key.to_string(), Cell::Num(v)));
        self
    }

    pub fn int(&mut self, key: &str, v: i64) -> &mut Self {
        self.values.push((key.to_string(), Cell::Int(v)));
        self
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.values.push((key.to_string(), Cell::Bool(v)));
        self
    }

    pub fn text(&mut self, key: &str, v: impl Into<String>) -> &mut Self {
        self.values.push((key.to_string(), Cell::Text(v.into())));
        self
    }

    pub fn check(&mut self, name: &str, lhs: f64, rhs: f64, hypotheses: &[(&str, bool)]) -> &mut Self {
        self.check_floor(name, lhs, rhs, 0.0, hypotheses)
    }

    /// `lhs <= rhs + floor`, where `floor` absorbs floating-point rounding of
    /// quantities whose exact bound may be zero.
    pub fn check_floor(&mut self, name: &str, lhs: f64, rhs: f64, floor: f64, hypotheses: &[(&str, bool)]) -> &mut Self {
        let hyp: BTreeMap<String, bool> = hypotheses.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let hypotheses_hold = hyp.values().all(|v| *v);
        self.checks.push(Check {
            name: name.to_string(),
            lhs,
            rhs,
            floor,
            hypotheses: hyp,
            hypotheses_hold,
            holds: lhs <= rhs + floor,
        });
        self
    }

    pub fn fail(&mut self, err: impl ToString) -> &mut Self {
        self.status = RowStatus::Failed;
        self.error = Some(err.to_string());
        self
    }

    pub fn skip(&mut self, reason: impl ToString) -> &mut Self {
        self.status = RowStatus::Skipped;
        self.error = Some(reason.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Extra tabular output written to `plotdata/<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub subcommand: String,
    pub tolerances: BTreeMap<String, f64>,
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub metadata: Metadata,
    pub rows: Vec<Row>,
    #[serde(skip)]
    pub plotdata: Vec<PlotData>,
}

impl RunReport {
    pub fn new(subcommand: &str) -> Self {
        Self {
            metadata: Metadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                subcommand: subcommand.to_string(),
                tolerances: BTreeMap::new(),
                constants: BTreeMap::new(),
            },
            rows: Vec::new(),
            plotdata: Vec::new(),
        }
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.checks).filter(|c| c.violated()).count()
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Failed).count()
    }

    /// 0 when every certified inequality holds and no row failed, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.violations() > 0 || self.failed_rows() > 0 {
            1
        } else {
            0
        }
    }

    /// Value columns in first-seen order, then one verdict column per check.
    pub fn columns(&self) -> (Vec<String>, Vec<String>) {
        let mut values: Vec<String> = Vec::new();
        let mut checks: Vec<String> = Vec::new();
        for r in &self.rows {
            for (k, _) in &r.values {
                if !values.contains(k) {
                    values.push(k.clone());
                }
            }
            for c in &r.checks {
                if !checks.contains(&c.name) {
                    checks.push(c.name.clone());
                }
            }
        }
        (values, checks)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let (values, checks) = self.columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["index".to_string(), "status".to_string(), "error".to_string()];
        header.extend(values.iter().cloned());
        header.extend(checks.iter().map(|c| format!("check_{c}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.index.to_string(), format!("{:?}", r.status).to_lowercase(), r.error.clone().unwrap_or_default()];
            for k in &values {
                rec.push(r.get(k).map(Cell::render).unwrap_or_default());
            }
            for c in &checks {
                rec.push(r.check_named(c).map(|c| c.verdict().to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut v = serde_json::to_value(self).map_err(|e| CliError::Io(e.to_string()))?;
        v["violations"] = self.violations().into();
        v["failed_rows"] = self.failed_rows().into();
        serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("report.csv"), self.to_csv()?)?;
        fs::write(out_dir.join("report.json"), self.to_json()?)?;
        if !self.plotdata.is_empty() {
            let dir = out_dir.join("plotdata");
            fs::create_dir_all(&dir)?;
            for p in &self.plotdata {
                let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", p.name)))?;
                w.write_record(&p.columns)?;
                for row in &p.rows {
                    w.write_record(row.iter().map(|x| fmt_f64(*x)))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn checks_and_exit_code() {
        let mut rep = RunReport::new("test");
        let mut r = Row::new(0);
        r.num("x", 1.0).check("a", 1.0, 2.0, &[("h", true)]).check("b", 3.0, 2.0, &[("h", false)]);
        rep.rows.push(r);
        assert_eq!(rep.violations(), 0);
        assert_eq!(rep.exit_code(), 0);
        let mut r = Row::new(1);
        r.check("a", 3.0, 2.0, &[]);
        rep.rows.push(r);
        assert_eq!(rep.violations(), 1);
        assert_eq!(rep.exit_code(), 1);
        let csv = rep.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,status,error,x,check_a,check_b");
        assert_eq!(lines[1], "0,ok,,1.0000000000000000e0,pass,n/a");
        assert_eq!(lines[2], "1,ok,,,fail,");
    }

    #[test]
    fn failed_rows_set_exit_code() {
        let mut rep = RunReport::new("test");
        let mut r = Row::new(0);
        r.fail("boom");
        rep.rows.push(r);
        assert_eq!(rep.exit_code(), 1);
        assert!(rep.to_json().unwrap().contains("\"failed_rows\": 1"));
    }
}
