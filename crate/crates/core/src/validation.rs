//! Temporal holdout: drop everything after a cutoff year, refit, and score
//! the refit against the held-out SRB estimates and against the full fit.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsrb::{fit_dsrb, project_dsrb};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, StateYearPanel, YearRange};
use crate::mcmc::{ChainRng, McmcConfig};
use crate::srb::{fit_srb, project_latent, SrbOptions, OBS_SD};
use crate::stats::{derive_seed, median, quantiles};
use crate::trajectory::Trajectories;

pub const DEFAULT_CUTOFF: i32 = 2012;
pub const DEFAULT_SETS: usize = 1000;
/// Years used for the log-linear TFR extension past the cutoff.
pub const TFR_TREND_YEARS: i32 = 5;
const STAGE_RESAMPLE: u64 = 0x5e7;
const STAGE_NOISE: u64 = 0x0b5;

/// A held-out SRB estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftOut {
    pub state: String,
    pub year: i32,
    pub srb: f64,
}

/// Training data and held-out SRB estimates. Training keeps SRB and TFR up
/// to the cutoff (TFR then extended by its recent log-linear trend) and DSRB
/// surveys whose reference year is not after the cutoff.
pub fn split_training(d: &Dataset, cutoff: i32) -> Result<(Dataset, Vec<LeftOut>)> {
    if !d.srb_estimates.years.contains(cutoff) {
        return Err(Error::Domain(format!("cutoff {cutoff} outside the SRB panel")));
    }
    let mut leftout = Vec::new();
    for (c, code) in d.states.codes().iter().enumerate() {
        for (year, srb) in d.srb_estimates.present(c).filter(|&(y, _)| y > cutoff) {
            leftout.push(LeftOut {
                state: code.clone(),
                year,
                srb,
            });
        }
    }
    if leftout.is_empty() {
        return Err(Error::Domain(format!("no SRB estimates after {cutoff}")));
    }
    let mut train = d.clone();
    train.srb_estimates = d.srb_estimates.truncated(cutoff);
    train.tfr = d.tfr.truncated(cutoff);
    for c in 0..d.states.len() {
        extend_log_linear(&mut train.tfr, c, cutoff);
    }
    train.dsrb_obs.retain(|o| o.ref_year <= cutoff);
    Ok((train, leftout))
}

/// Fill years after `cutoff` with a least-squares line through the log
/// values of the last [`TFR_TREND_YEARS`] years.
fn extend_log_linear(panel: &mut StateYearPanel, c: usize, cutoff: i32) {
    let pts: Vec<(f64, f64)> = (cutoff - TFR_TREND_YEARS + 1..=cutoff)
        .filter_map(|y| panel.get(c, y).filter(|v| *v > 0.0).map(|v| (y as f64, v.ln())))
        .collect();
    if pts.is_empty() {
        return;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let slope = if sxx > 0.0 {
        pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>() / sxx
    } else {
        0.0
    };
    for y in (cutoff + 1).max(panel.years.start)..=panel.years.end {
        panel.set(c, y, Some((ym + slope * (y as f64 - xm)).exp()));
    }
}

/// Error and coverage of held-out estimates, means over resampled sets.
/// Percentages are of the states in a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftOutMetrics {
    pub median_error: f64,
    pub median_abs_error: f64,
    pub below_95: f64,
    pub above_95: f64,
    pub below_80: f64,
    pub above_80: f64,
    pub n_sets: usize,
    pub n_leftout: usize,
}

/// Predictive summaries of one cell: median and the 95% and 80% bounds.
#[derive(Debug, Clone, Copy)]
struct CellSummary {
    median: f64,
    lo95: f64,
    hi95: f64,
    lo80: f64,
    hi80: f64,
}

impl CellSummary {
    fn of(samples: &[f64]) -> Self {
        let q = quantiles(samples, &[0.025, 0.1, 0.5, 0.9, 0.975]);
        CellSummary {
            median: q[2],
            lo95: q[0],
            hi95: q[4],
            lo80: q[1],
            hi80: q[3],
        }
    }
}

/// Score held-out estimates against predictive draws: each of `n_sets`
/// sets holds one randomly chosen held-out estimate per state.
pub fn prediction_metrics(leftout: &[LeftOut], predictive: &Trajectories, n_sets: usize, seed: u64) -> Result<LeftOutMetrics> {
    if leftout.is_empty() || n_sets == 0 {
        return Err(Error::Domain("need held-out estimates and at least one set".into()));
    }
    // Grouped by state code so the result does not depend on state order.
    let mut by_state: BTreeMap<&str, Vec<(f64, CellSummary)>> = BTreeMap::new();
    for l in leftout {
        let c = predictive
            .state_index(&l.state)
            .filter(|_| predictive.years.contains(l.year))
            .ok_or_else(|| Error::MissingCovariate {
                state: l.state.clone(),
                year: l.year,
            })?;
        by_state
            .entry(&l.state)
            .or_default()
            .push((l.srb, CellSummary::of(predictive.get(c, l.year))));
    }
    let mut rng = ChainRng::seed_from_u64(derive_seed(seed, STAGE_RESAMPLE, 0));
    let mut acc = [0.0; 6];
    let mut errors = Vec::with_capacity(by_state.len());
    for _ in 0..n_sets {
        errors.clear();
        let mut counts = [0usize; 4];
        for cells in by_state.values() {
            let (r, s) = cells[rng.random_range(0..cells.len())];
            errors.push(r - s.median);
            counts[0] += (r < s.lo95) as usize;
            counts[1] += (r > s.hi95) as usize;
            counts[2] += (r < s.lo80) as usize;
            counts[3] += (r > s.hi80) as usize;
        }
        let n = errors.len() as f64;
        acc[0] += median(&errors);
        acc[1] += median(&errors.iter().map(|e| e.abs()).collect::<Vec<_>>());
        for k in 0..4 {
            acc[2 + k] += 100.0 * counts[k] as f64 / n;
        }
    }
    let m = |k: usize| acc[k] / n_sets as f64;
    Ok(LeftOutMetrics {
        median_error: m(0),
        median_abs_error: m(1),
        below_95: m(2),
        above_95: m(3),
        below_80: m(4),
        above_80: m(5),
        n_sets,
        n_leftout: leftout.len(),
    })
}

/// Full-data medians against the training fit, for one held-out year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearComparison {
    pub year: i32,
    pub n_states: usize,
    pub median_error: f64,
    pub median_abs_error: f64,
    pub below_95: usize,
    pub above_95: usize,
    pub below_80: usize,
    pub above_80: usize,
}

impl YearComparison {
    pub fn pct(&self, count: usize) -> f64 {
        100.0 * count as f64 / self.n_states as f64
    }
}

/// Per year, compare full-data posterior medians with the training fit's
/// medians and 95%/80% intervals.
pub fn full_vs_training(full: &Trajectories, training: &Trajectories, years: YearRange) -> Result<Vec<YearComparison>> {
    let mut out = Vec::with_capacity(years.len());
    for year in years.years() {
        if !full.years.contains(year) || !training.years.contains(year) {
            return Err(Error::Domain(format!("fits do not cover {year}")));
        }
        let mut errors = Vec::with_capacity(full.states.len());
        let mut cmp = YearComparison {
            year,
            n_states: full.states.len(),
            median_error: 0.0,
            median_abs_error: 0.0,
            below_95: 0,
            above_95: 0,
            below_80: 0,
            above_80: 0,
        };
        for (c, code) in full.states.iter().enumerate() {
            let t = training.state_index(code).ok_or_else(|| Error::Domain(format!("training fit lacks {code}")))?;
            let full_median = median(full.get(c, year));
            let s = CellSummary::of(training.get(t, year));
            errors.push(full_median - s.median);
            cmp.below_95 += (full_median < s.lo95) as usize;
            cmp.above_95 += (full_median > s.hi95) as usize;
            cmp.below_80 += (full_median < s.lo80) as usize;
            cmp.above_80 += (full_median > s.hi80) as usize;
        }
        cmp.median_error = median(&errors);
        cmp.median_abs_error = median(&errors.iter().map(|e| e.abs()).collect::<Vec<_>>());
        out.push(cmp);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub cutoff: i32,
    pub n_sets: usize,
    pub mcmc: McmcConfig,
    pub srb: SrbOptions,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            cutoff: DEFAULT_CUTOFF,
            n_sets: DEFAULT_SETS,
            mcmc: McmcConfig {
                chains: 4,
                iterations: 6_000,
                ..McmcConfig::default()
            },
            srb: SrbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub cutoff: i32,
    pub leftout: LeftOutMetrics,
    pub by_year: Vec<YearComparison>,
    pub training_dsrb_converged: bool,
    pub training_srb_converged: bool,
}

/// Outputs of [`run_validation`]: the result plus the training fit's SRB
/// trajectories and the predictive draws for held-out estimates.
pub struct ValidationRun {
    pub result: ValidationResult,
    pub training_srb: Trajectories,
    pub predictive: Trajectories,
}

/// Refit on the training data and score it. `full_srb` holds the full-data
/// SRB trajectories over at least the held-out years.
pub fn run_validation(d: &Dataset, full_srb: &Trajectories, cfg: &ValidationConfig) -> Result<ValidationRun> {
    let (train, leftout) = split_training(d, cfg.cutoff)?;
    let last = leftout.iter().map(|l| l.year).max().expect("non-empty");
    let dsrb_fit = fit_dsrb(&train, &cfg.mcmc)?;
    let dsrb = project_dsrb(&dsrb_fit.draws, train.states.codes(), YearRange::DSRB_MODEL)?;
    let (model, srb_fit) = fit_srb(&train, &dsrb, &cfg.mcmc, &cfg.srb)?;
    let latent = project_latent(&srb_fit.draws, &model, &dsrb, last)?;
    let log_n = model.baseline.ln();
    let training_srb = latent.map(|p| (log_n + p).exp());
    let predictive = predictive_draws(&latent, log_n, cfg.mcmc.seed);
    let result = ValidationResult {
        cutoff: cfg.cutoff,
        leftout: prediction_metrics(&leftout, &predictive, cfg.n_sets, cfg.mcmc.seed)?,
        by_year: full_vs_training(full_srb, &training_srb, YearRange::new(cfg.cutoff + 1, last)?)?,
        training_dsrb_converged: dsrb_fit.converged,
        training_srb_converged: srb_fit.converged,
    };
    Ok(ValidationRun {
        result,
        training_srb,
        predictive,
    })
}

/// Draws of a new SRB estimate: the latent log ratio plus estimate noise.
fn predictive_draws(latent: &Trajectories, log_n: f64, seed: u64) -> Trajectories {
    let mut rng = ChainRng::seed_from_u64(derive_seed(seed, STAGE_NOISE, 0));
    let mut out = latent.clone();
    for c in 0..out.states.len() {
        for y in out.years.years() {
            for v in out.get_mut(c, y) {
                *v = (log_n + *v + OBS_SD * rng.sample::<f64, _>(StandardNormal)).exp();
            }
        }
    }
    out
}

/// `validation_report.json`, `validation_leftout.csv` and
/// `validation_by_year.csv` in `dir`.
pub fn write_report(result: &ValidationResult, dir: &Path) -> Result<()> {
    let json = dir.join("validation_report.json");
    std::fs::write(&json, serde_json::to_string_pretty(result)?).map_err(|e| Error::io(&json, e))?;

    let path = dir.join("validation_leftout.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let m = &result.leftout;
    w.write_record(["metric", "value"])?;
    for (k, v) in [
        ("median_error", m.median_error),
        ("median_abs_error", m.median_abs_error),
        ("below_95_pct", m.below_95),
        ("above_95_pct", m.above_95),
        ("below_80_pct", m.below_80),
        ("above_80_pct", m.above_80),
    ] {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("validation_by_year.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "year",
        "median_error",
        "median_abs_error",
        "below_95_pct",
        "below_95_n",
        "above_95_pct",
        "above_95_n",
        "below_80_pct",
        "below_80_n",
        "above_80_pct",
        "above_80_n",
    ])?;
    for r in &result.by_year {
        let mut rec = vec![r.year.to_string(), r.median_error.to_string(), r.median_abs_error.to_string()];
        for n in [r.below_95, r.above_95, r.below_80, r.above_80] {
            rec.push(r.pct(n).to_string());
            rec.push(n.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
