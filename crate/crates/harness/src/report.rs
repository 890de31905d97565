//! Tables, checks and their serialisation.
//!
//! A run produces a [`Report`]: named tables written as CSV (and optionally
//! `.dat`), plus a JSON summary with every check, the seed and the config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;

/// A pass/fail record. `value` is compared against `threshold`; `budget`
/// is the error allowance already folded into the threshold, if any.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub description: String,
    pub value: f64,
    pub budget: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(id: &str, description: &str, value: f64, budget: f64, threshold: f64) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            value,
            budget,
            threshold,
            relation: "<=".into(),
            pass: value <= threshold,
            detail: String::new(),
        }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(id: &str, description: &str, value: f64, budget: f64, threshold: f64) -> Self {
        Self { relation: ">=".into(), pass: value >= threshold, ..Self::at_most(id, description, value, budget, threshold) }
    }

    pub fn flag(id: &str, description: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            value: f64::from(u8::from(pass)),
            budget: 0.0,
            threshold: 1.0,
            relation: ">=".into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!("{tag} {}: {} (value {:.4e} {} threshold {:.4e}", self.id, self.description, self.value, self.relation, self.threshold);
        if self.budget > 0.0 {
            s.push_str(&format!(", budget {:.4e}", self.budget));
        }
        s.push(')');
        if !self.detail.is_empty() {
            s.push_str(" - ");
            s.push_str(&self.detail);
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_dat(&self, path: &Path) -> Result<()> {
        let mut s = format!("# {}\n", self.columns.join(" "));
        for r in &self.rows {
            s.push_str(&r.iter().map(|c| if c.is_empty() { "-".to_string() } else { c.replace(' ', "_") }).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        fs::write(path, s).with_context(|| format!("writing {}", path.display()))
    }
}

/// Formats a number for tables; shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    /// Set for indicative, desk-scale experiments.
    pub smoke: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub table_files: Vec<String>,
}

impl Report {
    pub fn new(name: &str, seed: u64) -> Self {
        Self { name: name.into(), seed, smoke: false, checks: Vec::new(), notes: Vec::new(), tables: Vec::new(), table_files: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge(&mut self, other: Report) {
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
        self.tables.extend(other.tables);
        self.smoke |= other.smoke;
    }

    /// Writes `<table>.csv` (and `.dat`) for every table and
    /// `<name>.json` with the checks and `config`. Returns the summary path.
    pub fn write(&mut self, dir: &Path, dat: bool, config: &impl Serialize) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.table_files.clear();
        for t in &self.tables {
            let csv = format!("{}.csv", t.name);
            t.write_csv(&dir.join(&csv))?;
            self.table_files.push(csv);
            if dat {
                let d = format!("{}.dat", t.name);
                t.write_dat(&dir.join(&d))?;
                self.table_files.push(d);
            }
        }
        #[derive(Serialize)]
        struct Summary<'a, C: Serialize> {
            report: &'a Report,
            passed: bool,
            config: &'a C,
        }
        let path = dir.join(format!("{}.json", self.name));
        let text = serde_json::to_string_pretty(&Summary { report: self, passed: self.passed(), config })?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_csv_dat_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("demo", 7);
        let mut t = Table::new("rows", &["a", "b"]);
        t.push(vec![num(1.5), "x y".into()]);
        r.tables.push(t);
        r.checks.push(Check::at_most("C0", "demo", 0.5, 0.1, 1.0));
        let p = r.write(dir.path(), true, &serde_json::json!({"k": 1})).unwrap();
        let csv = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(csv, "a,b\n1.5,x y\n");
        let dat = fs::read_to_string(dir.path().join("rows.dat")).unwrap();
        assert_eq!(dat, "# a b\n1.5 x_y\n");
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        assert_eq!(v["report"]["checks"][0]["id"], "C0");
        assert!(r.checks[0].line().starts_with("PASS C0"));
    }
}
