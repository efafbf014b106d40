//! Input tables and their alignment into a `(state, year)` keyed dataset.
//!
//! Every table is a UTF-8 CSV with a header row:
//!
//! ```text
//! srb_estimates.csv  state,year,srb
//! tfr.csv            state,year,tfr
//! births.csv         state,year,births_thousands
//! dsrb_obs.csv       state,ref_year,log_dsrb,sampling_var,survey_id
//! ```
//!
//! Missing cells stay missing. Nothing is imputed here.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jackknife::DsrbObservation;

/// National baseline SRB used unless overridden.
pub const DEFAULT_BASELINE: f64 = 1.053;
pub const MAX_STATES: usize = 64;

/// Ordered, unique state identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateIndex {
    states: Vec<String>,
}

impl StateIndex {
    pub fn new(states: Vec<String>) -> Result<Self> {
        if states.is_empty() || states.len() > MAX_STATES {
            return Err(Error::InvalidData(format!(
                "state count {} outside 1..={MAX_STATES}",
                states.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for s in &states {
            if !seen.insert(s.as_str()) {
                return Err(Error::InvalidData(format!("duplicate state code `{s}`")));
            }
        }
        Ok(StateIndex { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.states.iter().position(|s| s == code)
    }

    pub fn code(&self, c: usize) -> &str {
        &self.states[c]
    }

    pub fn codes(&self) -> &[String] {
        &self.states
    }
}

/// Inclusive calendar-year range; index 0 is `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub const SRB_MODEL: YearRange = YearRange { start: 1990, end: 2030 };
    pub const DSRB_MODEL: YearRange = YearRange { start: 1990, end: 2035 };
    pub const SRB_ESTIMATES: YearRange = YearRange { start: 1990, end: 2016 };
    pub const BIRTHS: YearRange = YearRange { start: 2017, end: 2030 };

    pub fn new(start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidData(format!("year range {start}..{end} is empty")));
        }
        Ok(YearRange { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn offset(&self, year: i32) -> Option<usize> {
        self.contains(year).then(|| (year - self.start) as usize)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Series {
    Srb,
    Tfr,
    Births,
}

impl Series {
    fn value_column(self) -> &'static str {
        match self {
            Series::Srb => "srb",
            Series::Tfr => "tfr",
            Series::Births => "births_thousands",
        }
    }
}

/// Rectangular `state x year` grid of one series with explicit missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct StateYearPanel {
    pub series: Series,
    pub years: YearRange,
    n_states: usize,
    values: Vec<Option<f64>>,
}

impl StateYearPanel {
    pub fn empty(series: Series, n_states: usize, years: YearRange) -> Self {
        StateYearPanel {
            series,
            years,
            n_states,
            values: vec![None; n_states * years.len()],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, state: usize, year: i32) -> Option<f64> {
        let t = self.years.offset(year)?;
        self.values[state * self.years.len() + t]
    }

    pub fn set(&mut self, state: usize, year: i32, value: Option<f64>) {
        let t = self
            .years
            .offset(year)
            .unwrap_or_else(|| panic!("year {year} outside panel range"));
        let n = self.years.len();
        self.values[state * n + t] = value;
    }

    /// `(year, value)` pairs present for one state, in year order.
    pub fn present(&self, state: usize) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.years
            .years()
            .filter_map(move |y| self.get(state, y).map(|v| (y, v)))
    }

    pub fn count_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn state_has_any(&self, state: usize) -> bool {
        self.present(state).next().is_some()
    }

    /// Copy restricted to years `<= last_year` (later cells become missing).
    pub fn truncated(&self, last_year: i32) -> Self {
        let mut out = self.clone();
        for c in 0..self.n_states {
            for y in self.years.years().filter(|&y| y > last_year) {
                out.set(c, y, None);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub states: StateIndex,
    pub srb_estimates: StateYearPanel,
    pub tfr: StateYearPanel,
    pub births: StateYearPanel,
    pub dsrb_obs: Vec<DsrbObservation>,
    pub baseline: f64,
}

impl Dataset {
    /// Standard deviation of all log SRB estimates.
    pub fn log_srb_sd(&self) -> f64 {
        let logs: Vec<f64> = (0..self.states.len())
            .flat_map(|c| self.srb_estimates.present(c).map(|(_, v)| v.ln()).collect::<Vec<_>>())
            .collect();
        crate::stats::variance(&logs).sqrt()
    }

    pub fn last_srb_year(&self) -> Option<i32> {
        (0..self.states.len())
            .filter_map(|c| self.srb_estimates.present(c).map(|(y, _)| y).last())
            .max()
    }
}

/// Locations of the input tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataPaths {
    pub srb_estimates: PathBuf,
    pub tfr: PathBuf,
    pub births: PathBuf,
    pub dsrb_obs: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DataPaths {
            srb_estimates: d.join("srb_estimates.csv"),
            tfr: d.join("tfr.csv"),
            births: d.join("births.csv"),
            dsrb_obs: d.join("dsrb_obs.csv"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataOptions {
    pub baseline: f64,
    /// Explicit state order. When absent, the sorted codes of the TFR table.
    pub states: Option<Vec<String>>,
    pub srb_years: YearRange,
    pub tfr_years: YearRange,
    pub births_years: YearRange,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            baseline: DEFAULT_BASELINE,
            states: None,
            srb_years: YearRange::SRB_ESTIMATES,
            tfr_years: YearRange::SRB_MODEL,
            births_years: YearRange::BIRTHS,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Parsed CSV row: its 1-based line number plus the raw fields.
pub(crate) struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

/// Reads a CSV, checks that `required` columns are present and returns the
/// column positions (in `required` order, then `optional`) plus rows.
pub(crate) fn read_table(
    path: &Path,
    required: &[&str],
    optional: &[&str],
) -> Result<(Vec<Option<usize>>, Vec<Row>)> {
    let text = read_text(path)?;
    let file = file_label(path);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::with_capacity(required.len() + optional.len());
    for name in required {
        let pos = headers.iter().position(|h| h == *name).ok_or_else(|| Error::Malformed {
            file: file.clone(),
            line: 1,
            column: name.to_string(),
            message: "missing required column".into(),
        })?;
        cols.push(Some(pos));
    }
    for name in optional {
        cols.push(headers.iter().position(|h| h == *name));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Malformed {
                file: file.clone(),
                line,
                column: String::new(),
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(Row {
            line,
            fields: rec.iter().map(str::to_owned).collect(),
        });
    }
    Ok((cols, rows))
}

pub(crate) struct FieldReader<'a> {
    pub file: &'a str,
    pub row: &'a Row,
}

impl FieldReader<'_> {
    pub fn raw(&self, pos: Option<usize>) -> Option<&str> {
        pos.and_then(|p| self.row.fields.get(p)).map(String::as_str)
    }

    pub fn str(&self, pos: Option<usize>, column: &str) -> Result<String> {
        match self.raw(pos) {
            Some(s) if !s.is_empty() => Ok(s.to_string()),
            _ => Err(self.malformed(column, "empty value")),
        }
    }

    pub fn f64(&self, pos: Option<usize>, column: &str) -> Result<f64> {
        let s = self.str(pos, column)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.malformed(column, &format!("`{s}` is not a finite number"))),
        }
    }

    pub fn opt_f64(&self, pos: Option<usize>, column: &str) -> Result<Option<f64>> {
        match self.raw(pos) {
            None | Some("") | Some("NA") => Ok(None),
            Some(_) => self.f64(pos, column).map(Some),
        }
    }

    pub fn i32(&self, pos: Option<usize>, column: &str) -> Result<i32> {
        let s = self.str(pos, column)?;
        s.parse::<i32>()
            .map_err(|_| self.malformed(column, &format!("`{s}` is not an integer")))
    }

    pub fn malformed(&self, column: &str, message: &str) -> Error {
        Error::Malformed {
            file: self.file.to_string(),
            line: self.row.line,
            column: column.to_string(),
            message: message.to_string(),
        }
    }
}

/// State codes appearing in a `state,...` table, for building the index.
fn state_codes(path: &Path) -> Result<BTreeSet<String>> {
    let (cols, rows) = read_table(path, &["state"], &[])?;
    let file = file_label(path);
    rows.iter()
        .map(|row| FieldReader { file: &file, row }.str(cols[0], "state"))
        .collect()
}

pub fn load_panel(
    path: &Path,
    series: Series,
    states: &StateIndex,
    years: YearRange,
) -> Result<StateYearPanel> {
    let value_col = series.value_column();
    let (cols, rows) = read_table(path, &["state", "year", value_col], &[])?;
    let file = file_label(path);
    let mut panel = StateYearPanel::empty(series, states.len(), years);
    let mut first_line: HashMap<(usize, i32), u64> = HashMap::new();
    for row in &rows {
        let r = FieldReader { file: &file, row };
        let code = r.str(cols[0], "state")?;
        let c = states.position(&code).ok_or_else(|| Error::UnknownState {
            file: file.clone(),
            line: row.line,
            state: code.clone(),
        })?;
        let year = r.i32(cols[1], "year")?;
        if !years.contains(year) {
            return Err(r.malformed(
                "year",
                &format!("{year} outside {}..={}", years.start, years.end),
            ));
        }
        let value = r.opt_f64(cols[2], value_col)?;
        if let Some(&prev) = first_line.get(&(c, year)) {
            return Err(Error::DuplicateKey {
                file: file.clone(),
                state: code,
                year,
                first_line: prev.min(row.line),
                second_line: prev.max(row.line),
            });
        }
        first_line.insert((c, year), row.line);
        panel.set(c, year, value);
    }
    Ok(panel)
}

pub fn load_dsrb_obs(path: &Path, states: &StateIndex) -> Result<Vec<DsrbObservation>> {
    let (cols, rows) = read_table(
        path,
        &["state", "ref_year", "log_dsrb", "sampling_var", "survey_id"],
        &[],
    )?;
    let file = file_label(path);
    let mut out = Vec::with_capacity(rows.len());
    let mut seen: HashMap<(String, String), u64> = HashMap::new();
    for row in &rows {
        let r = FieldReader { file: &file, row };
        let state = r.str(cols[0], "state")?;
        if states.position(&state).is_none() {
            return Err(Error::UnknownState {
                file: file.clone(),
                line: row.line,
                state,
            });
        }
        let obs = DsrbObservation {
            state: state.clone(),
            ref_year: r.i32(cols[1], "ref_year")?,
            log_dsrb: r.f64(cols[2], "log_dsrb")?,
            sampling_var: r.f64(cols[3], "sampling_var")?,
            survey_id: r.str(cols[4], "survey_id")?,
        };
        if let Some(&prev) = seen.get(&(state.clone(), obs.survey_id.clone())) {
            return Err(Error::DuplicateKey {
                file: file.clone(),
                state,
                year: obs.ref_year,
                first_line: prev,
                second_line: row.line,
            });
        }
        seen.insert((state, obs.survey_id.clone()), row.line);
        out.push(obs);
    }
    // Canonical order so the dataset does not depend on input row order.
    out.sort_by(|a, b| {
        let ca = states.position(&a.state);
        let cb = states.position(&b.state);
        ca.cmp(&cb)
            .then(a.ref_year.cmp(&b.ref_year))
            .then(a.survey_id.cmp(&b.survey_id))
    });
    Ok(out)
}

/// Loads and aligns all tables. The result always passes [`validate_dataset`].
pub fn load_dataset(paths: &DataPaths, opts: &DataOptions) -> Result<Dataset> {
    let states = match &opts.states {
        Some(list) => StateIndex::new(list.clone())?,
        None => StateIndex::new(state_codes(&paths.tfr)?.into_iter().collect())?,
    };
    if !(opts.baseline > 0.0) {
        return Err(Error::Config(format!("baseline {} must be positive", opts.baseline)));
    }
    let d = Dataset {
        srb_estimates: load_panel(&paths.srb_estimates, Series::Srb, &states, opts.srb_years)?,
        tfr: load_panel(&paths.tfr, Series::Tfr, &states, opts.tfr_years)?,
        births: load_panel(&paths.births, Series::Births, &states, opts.births_years)?,
        dsrb_obs: load_dsrb_obs(&paths.dsrb_obs, &states)?,
        baseline: opts.baseline,
        states,
    };
    let report = validate_dataset(&d);
    if !report.is_empty() {
        return Err(Error::InvalidData(report.to_string()));
    }
    Ok(d)
}

/// Writes the dataset as the four input tables under `dir`.
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<DataPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DataPaths::in_dir(dir);
    for (panel, path) in [
        (&d.srb_estimates, &paths.srb_estimates),
        (&d.tfr, &paths.tfr),
        (&d.births, &paths.births),
    ] {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["state", "year", panel.series.value_column()])?;
        for c in 0..d.states.len() {
            for (y, v) in panel.present(c) {
                w.write_record([d.states.code(c).to_string(), y.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::jackknife::write_dsrb_obs(&d.dsrb_obs, &paths.dsrb_obs)?;
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    SrbRange,
    TfrRange,
    TfrComplete,
    BirthsRange,
    PanelAlignment,
    DsrbRange,
    SamplingVariance,
    Baseline,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::SrbRange => "SRB range",
            Rule::TfrRange => "TFR range",
            Rule::TfrComplete => "TFR completeness",
            Rule::BirthsRange => "births range",
            Rule::PanelAlignment => "panel alignment",
            Rule::DsrbRange => "DSRB range",
            Rule::SamplingVariance => "sampling variance",
            Rule::Baseline => "baseline",
        };
        f.write_str(s)
    }
}

/// Offending cells per rule; `year` is `None` for whole-state findings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: BTreeMap<Rule, Vec<(String, Option<i32>)>>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: Rule, state: &str, year: Option<i32>) {
        self.violations
            .entry(rule)
            .or_default()
            .push((state.to_string(), year));
    }

    pub fn cells(&self, rule: Rule) -> &[(String, Option<i32>)] {
        self.violations.get(&rule).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (rule, cells) in &self.violations {
            write!(f, "[{rule}]")?;
            for (s, y) in cells.iter().take(20) {
                match y {
                    Some(y) => write!(f, " ({s},{y})")?,
                    None => write!(f, " ({s})")?,
                }
            }
            if cells.len() > 20 {
                write!(f, " ... {} more", cells.len() - 20)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !(d.baseline > 0.0) {
        report.push(Rule::Baseline, "*", None);
    }
    for c in 0..d.states.len() {
        let code = d.states.code(c);
        for (y, v) in d.srb_estimates.present(c) {
            if !(v > 0.8 && v < 1.5) {
                report.push(Rule::SrbRange, code, Some(y));
            }
        }
        for (y, v) in d.tfr.present(c) {
            if !(v > 0.5 && v < 8.0) {
                report.push(Rule::TfrRange, code, Some(y));
            }
        }
        for (y, v) in d.births.present(c) {
            if !(v >= 0.0) {
                report.push(Rule::BirthsRange, code, Some(y));
            }
        }
        if d.srb_estimates.state_has_any(c) {
            for y in d.tfr.years.years() {
                if d.tfr.get(c, y).is_none() {
                    report.push(Rule::TfrComplete, code, Some(y));
                }
            }
            if !d.births.state_has_any(c) {
                report.push(Rule::PanelAlignment, code, None);
            }
        }
    }
    for obs in &d.dsrb_obs {
        let r = obs.log_dsrb.exp();
        if !(r > 0.5 && r < 3.0) {
            report.push(Rule::DsrbRange, &obs.state, Some(obs.ref_year));
        }
        if !(obs.sampling_var >= 0.0) {
            report.push(Rule::SamplingVariance, &obs.state, Some(obs.ref_year));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    /// Two states, five years of SRB estimates, TFR 1990-2030, births 2017-2030.
    fn tiny_fixture(dir: &Path) -> (DataPaths, DataOptions) {
        let mut srb = String::from("state,year,srb\n");
        let mut tfr = String::from("state,year,tfr\n");
        let mut births = String::from("state,year,births_thousands\n");
        for s in ["PJ", "UP"] {
            for y in 1990..=1994 {
                srb.push_str(&format!("{s},{y},1.1{}\n", y - 1990));
            }
            for y in 1990..=2030 {
                tfr.push_str(&format!("{s},{y},{}\n", 4.0 - 0.05 * (y - 1990) as f64));
            }
            for y in 2017..=2030 {
                births.push_str(&format!("{s},{y},500\n"));
            }
        }
        let dsrb = "state,ref_year,log_dsrb,sampling_var,survey_id\nPJ,1992,0.3,0.01,S1\nUP,1992,0.4,0.02,S1\n";
        let paths = DataPaths {
            srb_estimates: write(dir, "srb_estimates.csv", &srb),
            tfr: write(dir, "tfr.csv", &tfr),
            births: write(dir, "births.csv", &births),
            dsrb_obs: write(dir, "dsrb_obs.csv", dsrb),
        };
        let opts = DataOptions {
            srb_years: YearRange::new(1990, 1994).unwrap(),
            ..DataOptions::default()
        };
        (paths, opts)
    }

    #[test]
    fn loads_minimal_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let d = load_dataset(&paths, &opts).unwrap();
        assert_eq!(d.states.len(), 2);
        assert_eq!(d.states.codes(), ["PJ", "UP"]);
        assert_eq!(d.srb_estimates.count_present(), 10);
        assert_eq!(d.tfr.count_present(), 82);
        assert_eq!(d.srb_estimates.get(1, 1993), Some(1.13));
        assert_eq!(d.baseline, DEFAULT_BASELINE);
    }

    #[test]
    fn duplicate_key_names_lines() {
        let dir = tempfile::tempdir().unwrap();
        let (mut paths, opts) = tiny_fixture(dir.path());
        paths.srb_estimates = write(
            dir.path(),
            "dup.csv",
            "state,year,srb\nPJ,1995,1.1\nUP,1990,1.1\nPJ,1995,1.2\n",
        );
        let opts = DataOptions {
            srb_years: YearRange::SRB_ESTIMATES,
            ..opts
        };
        match load_dataset(&paths, &opts) {
            Err(Error::DuplicateKey {
                state,
                year,
                first_line,
                second_line,
                ..
            }) => {
                assert_eq!((state.as_str(), year), ("PJ", 1995));
                assert_eq!((first_line, second_line), (2, 4));
            }
            other => panic!("expected duplicate-key error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_value_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let (mut paths, opts) = tiny_fixture(dir.path());
        paths.srb_estimates = write(dir.path(), "bad.csv", "state,year,srb\nPJ,1990,abc\n");
        let err = load_dataset(&paths, &opts).unwrap_err();
        match err {
            Error::Malformed { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "srb");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_state_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (mut paths, opts) = tiny_fixture(dir.path());
        paths.births = write(dir.path(), "b.csv", "state,year,births_thousands\nXX,2017,1\n");
        assert!(matches!(
            load_dataset(&paths, &opts),
            Err(Error::UnknownState { .. })
        ));
    }

    #[test]
    fn row_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let a = load_dataset(&paths, &opts).unwrap();
        let text = fs::read_to_string(&paths.srb_estimates).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let reordered = format!("{header}\n{}\n", lines.join("\n"));
        fs::write(&paths.srb_estimates, reordered).unwrap();
        let dsrb = "state,ref_year,log_dsrb,sampling_var,survey_id\nUP,1992,0.4,0.02,S1\nPJ,1992,0.3,0.01,S1\n";
        fs::write(&paths.dsrb_obs, dsrb).unwrap();
        let b = load_dataset(&paths, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let mut a = load_dataset(&paths, &opts).unwrap();
        a.srb_estimates.set(0, 1991, Some(1.0 / 3.0 + 0.8));
        let out = dir.path().join("rt");
        let p2 = write_dataset(&a, &out).unwrap();
        let b = load_dataset(&p2, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_flags_tfr_range_cell() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let mut d = load_dataset(&paths, &opts).unwrap();
        assert!(validate_dataset(&d).is_empty());
        d.tfr.set(1, 2000, Some(-1.0));
        let r = validate_dataset(&d);
        assert_eq!(r.cells(Rule::TfrRange), [("UP".to_string(), Some(2000))]);
    }

    #[test]
    fn report_flags_missing_births_state() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let mut d = load_dataset(&paths, &opts).unwrap();
        for y in 2017..=2030 {
            d.births.set(0, y, None);
        }
        let r = validate_dataset(&d);
        assert_eq!(r.cells(Rule::PanelAlignment), [("PJ".to_string(), None)]);
    }

    #[test]
    fn report_flags_tfr_gap_for_modelled_state() {
        let dir = tempfile::tempdir().unwrap();
        let (paths, opts) = tiny_fixture(dir.path());
        let mut d = load_dataset(&paths, &opts).unwrap();
        d.tfr.set(0, 2025, None);
        assert_eq!(
            validate_dataset(&d).cells(Rule::TfrComplete),
            [("PJ".to_string(), Some(2025))]
        );
    }
}
