//! Missing female births from SRB draws and projected births, and the
//! imbalance classification rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{StateYearPanel, YearRange};
use crate::stats::quantiles;
use crate::trajectory::Trajectories;

pub const NATIONAL: &str = "India";
/// Fraction of positive AMFB draws that must be strictly exceeded.
pub const IMBALANCE_THRESHOLD: f64 = 0.95;
pub const MIN_CLASSIFY_DRAWS: usize = 100;

/// `(B_F, B_FE, AMFB)` for total births `b`, SRB `r` and baseline `n`.
pub fn missing_female_births(b: f64, r: f64, n: f64) -> (f64, f64, f64) {
    let bf = b / (1.0 + r);
    let bfe = (b - bf) / n;
    (bf, bfe, bfe - bf)
}

/// Per-draw AMFB for every state over the births years.
pub fn amfb_trajectories(srb: &Trajectories, births: &StateYearPanel, birth_codes: &[String], baseline: f64) -> Result<Trajectories> {
    let years = births.years;
    for y in [years.start, years.end] {
        if !srb.years.contains(y) {
            return Err(Error::Domain(format!("SRB trajectories do not cover {y}")));
        }
    }
    let mut out = Trajectories::zeros(srb.states.clone(), years, srb.n_draws);
    for (c, code) in srb.states.iter().enumerate() {
        let bc = birth_codes
            .iter()
            .position(|s| s == code)
            .ok_or_else(|| Error::MissingCovariate {
                state: code.clone(),
                year: years.start,
            })?;
        for y in years.years() {
            let b = births.get(bc, y).ok_or_else(|| Error::MissingCovariate {
                state: code.clone(),
                year: y,
            })?;
            let r = srb.get(c, y);
            for (slot, &rg) in out.get_mut(c, y).iter_mut().zip(r) {
                *slot = missing_female_births(b, rg, baseline).2;
            }
        }
    }
    Ok(out)
}

fn check_window(amfb: &Trajectories, t1: i32, t2: i32) -> Result<()> {
    if t1 > t2 || !amfb.years.contains(t1) || !amfb.years.contains(t2) {
        return Err(Error::Domain(format!(
            "window {t1}-{t2} outside {}-{}",
            amfb.years.start, amfb.years.end
        )));
    }
    Ok(())
}

/// Per-draw cumulative missing female births over `t1..=t2`.
pub fn cmfb(amfb: &Trajectories, state: usize, t1: i32, t2: i32) -> Result<Vec<f64>> {
    check_window(amfb, t1, t2)?;
    let mut out = vec![0.0; amfb.n_draws];
    for y in t1..=t2 {
        for (o, v) in out.iter_mut().zip(amfb.get(state, y)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Per-draw sum over states of the CMFB.
pub fn national_cmfb(amfb: &Trajectories, t1: i32, t2: i32) -> Result<Vec<f64>> {
    let mut out = vec![0.0; amfb.n_draws];
    for c in 0..amfb.states.len() {
        for (o, v) in out.iter_mut().zip(cmfb(amfb, c, t1, t2)?) {
            *o += v;
        }
    }
    Ok(out)
}

/// Imbalanced iff in some year more than 95% of draws have positive AMFB.
pub fn classify_imbalance(per_year: &[&[f64]]) -> bool {
    per_year.iter().any(|d| positive_fraction(d) > IMBALANCE_THRESHOLD)
}

fn positive_fraction(d: &[f64]) -> f64 {
    d.iter().filter(|&&v| v > 0.0).count() as f64 / d.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub state: String,
    pub imbalanced: bool,
    /// First year whose positive fraction exceeds the threshold.
    pub first_year: Option<i32>,
    pub max_positive_fraction: f64,
}

pub fn classify_all(amfb: &Trajectories, window: YearRange) -> Result<Vec<Classification>> {
    check_window(amfb, window.start, window.end)?;
    if amfb.n_draws < MIN_CLASSIFY_DRAWS {
        return Err(Error::Domain(format!(
            "classification needs at least {MIN_CLASSIFY_DRAWS} draws, have {}",
            amfb.n_draws
        )));
    }
    Ok(amfb
        .states
        .iter()
        .enumerate()
        .map(|(c, code)| {
            let per_year: Vec<&[f64]> = window.years().map(|y| amfb.get(c, y)).collect();
            let fractions: Vec<f64> = per_year.iter().map(|d| positive_fraction(d)).collect();
            let first_year = window
                .years()
                .zip(&fractions)
                .find(|(_, &f)| f > IMBALANCE_THRESHOLD)
                .map(|(y, _)| y);
            Classification {
                state: code.clone(),
                imbalanced: classify_imbalance(&per_year),
                first_year,
                max_positive_fraction: fractions.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect())
}

pub fn write_classification(rows: &[Classification], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "imbalanced", "first_year", "max_positive_fraction"])?;
    for r in rows {
        w.write_record([
            r.state.clone(),
            r.imbalanced.to_string(),
            r.first_year.map(|y| y.to_string()).unwrap_or_default(),
            r.max_positive_fraction.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of the missing-births table; each field holds the requested
/// quantiles of a per-draw quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingBirthsRow {
    pub state: String,
    pub amfb_early: Vec<f64>,
    pub amfb_late: Vec<f64>,
    pub cmfb: Vec<f64>,
    /// Share of the national CMFB, in percent.
    pub proportion: Vec<f64>,
}

/// Periods of the table: average AMFB over each, CMFB over their union.
#[derive(Debug, Clone, Copy)]
pub struct TablePeriods {
    pub early: (i32, i32),
    pub late: (i32, i32),
}

impl Default for TablePeriods {
    fn default() -> Self {
        TablePeriods {
            early: (2017, 2025),
            late: (2026, 2030),
        }
    }
}

fn per_draw_mean(total: &[f64], years: i32) -> Vec<f64> {
    total.iter().map(|v| v / years as f64).collect()
}

/// State rows followed by the national row; everything per draw, then summarized.
pub fn missing_births_table(amfb: &Trajectories, periods: TablePeriods, probs: &[f64]) -> Result<Vec<MissingBirthsRow>> {
    let (e1, e2) = periods.early;
    let (l1, l2) = periods.late;
    let national = national_cmfb(amfb, e1, l2)?;
    let mut rows = Vec::with_capacity(amfb.states.len() + 1);
    let mut nat_early = vec![0.0; amfb.n_draws];
    let mut nat_late = vec![0.0; amfb.n_draws];
    for (c, code) in amfb.states.iter().enumerate() {
        let early = cmfb(amfb, c, e1, e2)?;
        let late = cmfb(amfb, c, l1, l2)?;
        let total = cmfb(amfb, c, e1, l2)?;
        for g in 0..amfb.n_draws {
            nat_early[g] += early[g];
            nat_late[g] += late[g];
        }
        let share: Vec<f64> = total.iter().zip(&national).map(|(s, n)| 100.0 * s / n).collect();
        rows.push(MissingBirthsRow {
            state: code.clone(),
            amfb_early: quantiles(&per_draw_mean(&early, e2 - e1 + 1), probs),
            amfb_late: quantiles(&per_draw_mean(&late, l2 - l1 + 1), probs),
            cmfb: quantiles(&total, probs),
            proportion: quantiles(&share, probs),
        });
    }
    rows.push(MissingBirthsRow {
        state: NATIONAL.into(),
        amfb_early: quantiles(&per_draw_mean(&nat_early, e2 - e1 + 1), probs),
        amfb_late: quantiles(&per_draw_mean(&nat_late, l2 - l1 + 1), probs),
        cmfb: quantiles(&national, probs),
        proportion: vec![100.0; probs.len()],
    });
    Ok(rows)
}

pub fn write_missing_births(rows: &[MissingBirthsRow], probs: &[f64], periods: TablePeriods, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let (e1, e2) = periods.early;
    let (l1, l2) = periods.late;
    let groups = [
        format!("amfb_{e1}_{e2}"),
        format!("amfb_{l1}_{l2}"),
        format!("cmfb_{e1}_{l2}"),
        "proportion_pct".to_string(),
    ];
    let mut header = vec!["state".to_string()];
    for g in &groups {
        header.extend(probs.iter().map(|p| format!("{g}_q{}", p * 100.0)));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.state.clone()];
        for q in [&r.amfb_early, &r.amfb_late, &r.cmfb, &r.proportion] {
            rec.extend(q.iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Series;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let (bf, bfe, amfb) = missing_female_births(2100.0, 1.053, 1.053);
        assert!((bf - bfe).abs() < 1e-12 && amfb.abs() <= 1e-12 * bf);
        let (bf, bfe, amfb) = missing_female_births(2100.0, 1.10, 1.053);
        assert!((bf - 1000.0).abs() < 1e-9);
        assert!((bfe - 1100.0 / 1.053).abs() < 1e-9);
        assert!((amfb - 44.634_377_967_711_3).abs() < 1e-9);
    }

    #[test]
    fn boundary_is_strict() {
        let mut exactly = vec![1.0; 95];
        exactly.extend([0.0; 5]);
        assert!(!classify_imbalance(&[&exactly, &exactly]));
        let mut above = vec![1.0; 951];
        above.extend([-1.0; 49]);
        assert!(classify_imbalance(&[&exactly, &above]));
        assert!(!classify_imbalance(&[&[0.0; 200], &[-3.0; 200]]));
        assert!(classify_imbalance(&[&[2.0; 100]]));
    }

    fn toy_amfb() -> Trajectories {
        let mut t = Trajectories::zeros(vec!["A".into(), "B".into()], YearRange::BIRTHS, 4);
        for c in 0..2 {
            for y in YearRange::BIRTHS.years() {
                for g in 0..4 {
                    t.get_mut(c, y)[g] = (c + 1) as f64 * (y - 2010) as f64 + g as f64 * 0.5 - 1.0;
                }
            }
        }
        t
    }

    #[test]
    fn cmfb_is_additive_and_national_sums_states() {
        let a = toy_amfb();
        let whole = cmfb(&a, 1, 2017, 2030).unwrap();
        let parts: Vec<f64> = cmfb(&a, 1, 2017, 2025)
            .unwrap()
            .iter()
            .zip(cmfb(&a, 1, 2026, 2030).unwrap())
            .map(|(x, y)| x + y)
            .collect();
        for (w, p) in whole.iter().zip(&parts) {
            assert!((w - p).abs() < 1e-9);
        }
        assert_eq!(cmfb(&a, 0, 2020, 2020).unwrap(), a.get(0, 2020));
        let nat = national_cmfb(&a, 2017, 2030).unwrap();
        let sum0 = cmfb(&a, 0, 2017, 2030).unwrap();
        for g in 0..4 {
            assert!((nat[g] - sum0[g] - whole[g]).abs() < 1e-9);
        }
        assert!(cmfb(&a, 0, 2016, 2020).is_err());
        assert!(cmfb(&a, 0, 2021, 2020).is_err());
    }

    #[test]
    fn national_row_uses_per_draw_sums() {
        // Skewed draws: the sum of medians differs from the median of sums.
        let mut t = Trajectories::zeros(vec!["A".into(), "B".into()], YearRange::new(2017, 2017).unwrap(), 3);
        t.get_mut(0, 2017).copy_from_slice(&[0.0, 1.0, 10.0]);
        t.get_mut(1, 2017).copy_from_slice(&[10.0, 0.0, 1.0]);
        let periods = TablePeriods {
            early: (2017, 2017),
            late: (2017, 2017),
        };
        let rows = missing_births_table(&t, periods, &[0.5]).unwrap();
        let nat = rows.last().unwrap();
        assert_eq!(nat.state, NATIONAL);
        assert_eq!(nat.cmfb, vec![10.0]);
        assert_ne!(rows[0].cmfb[0] + rows[1].cmfb[0], nat.cmfb[0]);
    }

    #[test]
    fn amfb_from_trajectories() {
        let mut srb = Trajectories::zeros(vec!["A".into()], YearRange::SRB_MODEL, 2);
        for y in YearRange::SRB_MODEL.years() {
            srb.get_mut(0, y).copy_from_slice(&[1.053, 1.10]);
        }
        let mut births = StateYearPanel::empty(Series::Births, 1, YearRange::BIRTHS);
        for y in YearRange::BIRTHS.years() {
            births.set(0, y, Some(2100.0));
        }
        let a = amfb_trajectories(&srb, &births, &["A".into()], 1.053).unwrap();
        assert!(a.get(0, 2030)[0].abs() < 1e-9);
        assert!((a.get(0, 2017)[1] - 44.634_377_967_711_3).abs() < 1e-9);
        births.set(0, 2024, None);
        assert!(matches!(
            amfb_trajectories(&srb, &births, &["A".into()], 1.053),
            Err(Error::MissingCovariate { year: 2024, .. })
        ));
    }

    proptest! {
        #[test]
        fn identities_hold(b in 0.0f64..1e5, r in 0.5f64..2.0, k in 0.1f64..10.0) {
            let n = 1.053;
            let (bf, bfe, amfb) = missing_female_births(b, r, n);
            prop_assert!(((1.0 + r) * bf - b).abs() <= 1e-9 * b.max(1.0));
            prop_assert!((amfb - (bfe - bf)).abs() <= 1e-12 * b.max(1.0));
            if b > 0.0 && (r - n).abs() > 1e-9 {
                prop_assert_eq!(amfb > 0.0, r > n);
            }
            let (bf2, bfe2, amfb2) = missing_female_births(k * b, r, n);
            prop_assert!((bf2 - k * bf).abs() <= 1e-9 * (k * b).max(1.0));
            prop_assert!((bfe2 - k * bfe).abs() <= 1e-9 * (k * b).max(1.0));
            prop_assert!((amfb2 - k * amfb).abs() <= 1e-9 * (k * b).max(1.0));
        }
    }
}
