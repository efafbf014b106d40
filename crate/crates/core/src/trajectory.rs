//! Posterior sample vectors per `(state, year)` and their quantile summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::YearRange;
use crate::stats::quantile_sorted;

pub const DEFAULT_QUANTILES: [f64; 5] = [0.025, 0.1, 0.5, 0.9, 0.975];

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub states: Vec<String>,
    pub years: YearRange,
    pub n_draws: usize,
    /// `[state][year][draw]` flattened.
    values: Vec<f64>,
}

impl Trajectories {
    pub fn zeros(states: Vec<String>, years: YearRange, n_draws: usize) -> Self {
        let n = states.len() * years.len() * n_draws;
        Trajectories {
            states,
            years,
            n_draws,
            values: vec![0.0; n],
        }
    }

    fn offset(&self, state: usize, year: i32) -> usize {
        let t = self
            .years
            .offset(year)
            .unwrap_or_else(|| panic!("year {year} outside trajectory range"));
        (state * self.years.len() + t) * self.n_draws
    }

    pub fn get(&self, state: usize, year: i32) -> &[f64] {
        let o = self.offset(state, year);
        &self.values[o..o + self.n_draws]
    }

    pub fn get_mut(&mut self, state: usize, year: i32) -> &mut [f64] {
        let o = self.offset(state, year);
        &mut self.values[o..o + self.n_draws]
    }

    pub fn state_index(&self, code: &str) -> Option<usize> {
        self.states.iter().position(|s| s == code)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Trajectories {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Quantile summary rows: state, year, then one value per probability.
    pub fn summarize(&self, probs: &[f64]) -> Vec<SummaryRow> {
        let mut rows = Vec::with_capacity(self.states.len() * self.years.len());
        for (c, code) in self.states.iter().enumerate() {
            for y in self.years.years() {
                rows.push(SummaryRow {
                    key: vec![code.clone(), y.to_string()],
                    quantiles: summarize(self.get(c, y), probs),
                });
            }
        }
        rows
    }

    /// Long-format CSV `state,year,draw_id,<value_name>`.
    pub fn write_csv(&self, path: &Path, value_name: &str) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "state,year,draw_id,{value_name}").map_err(io)?;
        for (c, code) in self.states.iter().enumerate() {
            for y in self.years.years() {
                for (g, v) in self.get(c, y).iter().enumerate() {
                    writeln!(w, "{code},{y},{g},{v}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path, value_name: &str) -> Result<Self> {
        let text = crate::ingest::read_text(path)?;
        let file = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, h)| h).unwrap_or_default();
        if header.trim() != format!("state,year,draw_id,{value_name}") {
            return Err(Error::Malformed {
                file,
                line: 1,
                column: value_name.to_string(),
                message: format!("unexpected header `{header}`"),
            });
        }
        let mut rows: Vec<(usize, i32, usize, f64)> = Vec::new();
        let mut states: Vec<String> = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |col: &str| Error::Malformed {
                file: file.clone(),
                line: i as u64 + 1,
                column: col.to_string(),
                message: "unparseable value".into(),
            };
            let mut parts = line.split(',');
            let code = parts.next().ok_or_else(|| bad("state"))?;
            let c = match states.iter().position(|s| s == code) {
                Some(c) => c,
                None => {
                    states.push(code.to_string());
                    states.len() - 1
                }
            };
            let y: i32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("year"))?;
            let g: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("draw_id"))?;
            let v: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(value_name))?;
            rows.push((c, y, g, v));
        }
        let (y0, y1) = rows.iter().fold((i32::MAX, i32::MIN), |(a, b), r| (a.min(r.1), b.max(r.1)));
        let n_draws = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let years = YearRange::new(y0, y1)?;
        let mut out = Trajectories::zeros(states, years, n_draws);
        let expected = out.values.len();
        if rows.len() != expected {
            return Err(Error::InvalidData(format!(
                "{file}: {} rows, expected a full grid of {expected}",
                rows.len()
            )));
        }
        for (c, y, g, v) in rows {
            out.get_mut(c, y)[g] = v;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub quantiles: Vec<f64>,
}

/// Midpoint-interpolated empirical quantiles of one sample vector.
pub fn summarize(samples: &[f64], probs: &[f64]) -> Vec<f64> {
    assert!(!samples.is_empty(), "summary of empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

pub fn quantile_header(probs: &[f64]) -> Vec<String> {
    probs.iter().map(|p| format!("q{}", p * 100.0)).collect()
}

pub fn write_summary(rows: &[SummaryRow], key_names: &[&str], probs: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = key_names.iter().map(|s| s.to_string()).collect();
    header.extend(quantile_header(probs));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = r.key.clone();
        rec.extend(r.quantiles.iter().map(|q| q.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
