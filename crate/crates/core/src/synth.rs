//! Synthetic inputs with known truth: 29 states, 566 SRB estimates and 101
//! survey-based DSRB observations, all generated from the two models.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsrb::{dsrb_log, time_index, DsrbParams};
use crate::error::{Error, Result};
use crate::ingest::{write_dataset, DataPaths, Dataset, Series, StateIndex, StateYearPanel, YearRange, DEFAULT_BASELINE};
use crate::jackknife::{default_fieldwork, estimate_all, write_women, WomanRecord};
use crate::srb::DSRB_LAG;

pub const STATE_CODES: [&str; 29] = [
    "AP", "AR", "AS", "BR", "CT", "DL", "GA", "GJ", "HP", "HR", "JH", "JK", "KA", "KL", "MH", "ML", "MN", "MP", "MZ",
    "NL", "OR", "PB", "RJ", "SK", "TN", "TR", "UP", "UT", "WB",
];

/// States with every year, then sparse states (three years), then one
/// state with two years: 20 * 27 + 8 * 3 + 2 = 566 cells.
const FULL_STATES: usize = 20;
const SPARSE_YEARS: [i32; 3] = [1991, 2001, 2011];
const SPARSEST_YEARS: [i32; 2] = [2001, 2011];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub states: usize,
    pub clusters: usize,
    pub women_per_cluster: usize,
    pub dsrb_hypers: DsrbHypers,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DsrbHypers {
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
    pub omega: f64,
}

impl Default for DsrbHypers {
    fn default() -> Self {
        DsrbHypers {
            mu: [0.3, -0.4, 0.0],
            sigma: [0.15, 0.2, 0.3],
            omega: 0.05,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2017,
            states: STATE_CODES.len(),
            clusters: 20,
            women_per_cluster: 14,
            dsrb_hypers: DsrbHypers::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrbStateTruth {
    pub rho: f64,
    pub sigma_eps: f64,
    pub alpha: f64,
    /// `f(x) = a + b (x - xbar) + q (x - xbar)^2` on log TFR.
    pub f_coef: [f64; 3],
    pub log_tfr_center: f64,
    /// `log R - log N` for 1990-2030.
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub states: Vec<String>,
    pub delta: Vec<f64>,
    pub phi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub srb: Vec<SrbStateTruth>,
}

impl SynthTruth {
    pub fn dsrb_params(&self, hypers: &DsrbHypers) -> DsrbParams {
        DsrbParams {
            delta: self.delta.clone(),
            phi: self.phi.clone(),
            zeta: self.zeta.clone(),
            mu: hypers.mu,
            sigma: hypers.sigma,
            omega: hypers.omega,
        }
    }

    /// True SRB of state `c` in `year` (1990-2030).
    pub fn srb(&self, c: usize, year: i32, baseline: f64) -> f64 {
        baseline * self.srb[c].p[(year - YearRange::SRB_MODEL.start) as usize].exp()
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub women: Vec<WomanRecord>,
    pub truth: SynthTruth,
}

fn state_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match STATE_CODES.get(i) {
            Some(c) => c.to_string(),
            None => format!("X{i}"),
        })
        .collect()
}

fn srb_years(c: usize) -> Vec<i32> {
    match c {
        c if c < FULL_STATES => YearRange::SRB_ESTIMATES.years().collect(),
        c if c < FULL_STATES + 8 => SPARSE_YEARS.to_vec(),
        _ => SPARSEST_YEARS.to_vec(),
    }
}

/// Surveys with their fieldwork years; states from `first_missing` on are
/// absent from the survey.
fn surveys(n_states: usize) -> Vec<(&'static str, f64, usize)> {
    vec![
        ("DHS1992", 1992.0, 21.min(n_states)),
        ("DHS1998", 1998.0, 22.min(n_states)),
        ("DHS2005", 2005.0, n_states),
        ("DHS2015", 2015.0, n_states),
    ]
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    if cfg.states < 2 || cfg.clusters < 2 || cfg.women_per_cluster == 0 {
        return Err(Error::Config("synthetic data needs >= 2 states, >= 2 clusters and women per cluster".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let codes = state_codes(cfg.states);
    let n = codes.len();
    let states = StateIndex::new(codes.clone())?;
    let h = cfg.dsrb_hypers;

    // DSRB truth: hierarchical draws, kept away from the delta <= -1 edge.
    let mut draw = |k: usize| -> Vec<f64> { (0..n).map(|_| normal(h.mu[k], h.sigma[k]).sample(&mut rng)).collect() };
    let (delta, phi, zeta) = (draw(0), draw(1), draw(2));
    let d_true = |c: usize, y: i32| dsrb_log(time_index(y), delta[c], phi[c], zeta[c]);

    // TFR: logistic decline to a replacement-level floor.
    let mut tfr = StateYearPanel::empty(Series::Tfr, n, YearRange::SRB_MODEL);
    for c in 0..n {
        let start = rng.random_range(2.6..5.0);
        let floor = rng.random_range(1.5..1.95);
        let rate = rng.random_range(0.1..0.22);
        let mid = rng.random_range(1994.0..2014.0);
        for y in YearRange::SRB_MODEL.years() {
            let v = floor + (start - floor) / (1.0 + (rate * (y as f64 - mid)).exp());
            tfr.set(c, y, Some((v * 1000.0).round() / 1000.0));
        }
    }

    let mut births = StateYearPanel::empty(Series::Births, n, YearRange::BIRTHS);
    for c in 0..n {
        let base: f64 = rng.random_range(20.0..5500.0);
        let decline: f64 = rng.random_range(0.003..0.02);
        for (i, y) in YearRange::BIRTHS.years().enumerate() {
            births.set(c, y, Some((base * (1.0 - decline).powi(i as i32) * 10.0).round() / 10.0));
        }
    }

    // SRB truth: AR(1) around alpha * D(t+5) + f(log TFR).
    let log_n = DEFAULT_BASELINE.ln();
    let mut srb = StateYearPanel::empty(Series::Srb, n, YearRange::SRB_ESTIMATES);
    let mut srb_truth = Vec::with_capacity(n);
    for c in 0..n {
        let rho: f64 = rng.random_range(0.8..0.95);
        let sigma_eps = rng.random_range(0.004..0.01);
        let alpha = normal(0.04, 0.03).sample(&mut rng);
        let f_coef = [
            rng.random_range(0.0..0.06),
            rng.random_range(-0.04..0.04),
            rng.random_range(-0.05..0.05),
        ];
        let log_tfr: Vec<f64> = YearRange::SRB_MODEL.years().map(|y| tfr.get(c, y).unwrap().ln()).collect();
        let center = log_tfr.iter().sum::<f64>() / log_tfr.len() as f64;
        let v: Vec<f64> = YearRange::SRB_MODEL
            .years()
            .zip(&log_tfr)
            .map(|(y, &x)| {
                let dx = x - center;
                alpha * d_true(c, y + DSRB_LAG) + f_coef[0] + f_coef[1] * dx + f_coef[2] * dx * dx
            })
            .collect();
        let mut p = Vec::with_capacity(v.len());
        let mut e = normal(0.0, sigma_eps / (1.0 - rho * rho).sqrt()).sample(&mut rng);
        for vt in &v {
            p.push(vt + e);
            e = rho * e + normal(0.0, sigma_eps).sample(&mut rng);
        }
        for y in srb_years(c) {
            let t = (y - YearRange::SRB_MODEL.start) as usize;
            let s = (log_n + p[t] + normal(0.0, crate::srb::OBS_SD).sample(&mut rng)).exp();
            srb.set(c, y, Some((s * 1e5).round() / 1e5));
        }
        srb_truth.push(SrbStateTruth {
            rho,
            sigma_eps,
            alpha,
            f_coef,
            log_tfr_center: center,
            p,
        });
    }

    let women = simulate_women(cfg, &codes, &|c, y| d_true(c, y), &mut rng);
    let jk = estimate_all(&women, &default_fieldwork())?;
    if !jk.unusable.is_empty() {
        return Err(Error::InvalidData(format!("synthetic survey produced unusable cells: {:?}", jk.unusable)));
    }

    Ok(Synthetic {
        dataset: Dataset {
            states,
            srb_estimates: srb,
            tfr,
            births,
            dsrb_obs: jk.observations,
            baseline: DEFAULT_BASELINE,
        },
        women,
        truth: SynthTruth {
            states: codes,
            delta,
            phi,
            zeta,
            srb: srb_truth,
        },
    })
}

/// Woman-level ideal family compositions whose weighted boy/girl ratio
/// tracks the state's DSRB plus a survey-level non-sampling shift.
fn simulate_women(
    cfg: &SynthConfig,
    codes: &[String],
    d_true: &dyn Fn(usize, i32) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<WomanRecord> {
    const NEUTRAL_SHARE: f64 = 0.25;
    let mut out = Vec::new();
    let mut cluster_id = 0i64;
    for (survey, start, first_missing) in surveys(codes.len()) {
        for (c, code) in codes.iter().enumerate().take(first_missing) {
            let log_ratio = d_true(c, start as i32) + normal(0.0, cfg.dsrb_hypers.omega).sample(rng);
            let r = log_ratio.exp();
            // Share of boys among women with a stated preference so that the
            // expected ratio (neutral women split evenly) equals r.
            let p = ((1.0 - NEUTRAL_SHARE / 2.0) * r - NEUTRAL_SHARE / 2.0) / ((1.0 - NEUTRAL_SHARE) * (1.0 + r));
            let p = p.clamp(0.02, 0.98);
            for _ in 0..cfg.clusters {
                cluster_id += 1;
                let logit = (p / (1.0 - p)).ln() + normal(0.0, 0.15).sample(rng);
                let pc = 1.0 / (1.0 + (-logit).exp());
                for _ in 0..cfg.women_per_cluster {
                    let total = match rng.random_range(0..10) {
                        0..=5 => 2u64,
                        6..=8 => 3,
                        _ => 4,
                    };
                    let neutral = rng.random_bool(NEUTRAL_SHARE);
                    let (boys, girls) = if neutral {
                        (None, None)
                    } else {
                        let b = Binomial::new(total, pc).expect("valid binomial").sample(rng);
                        (Some(b as f64), Some((total - b) as f64))
                    };
                    out.push(WomanRecord {
                        survey_id: survey.to_string(),
                        state: code.clone(),
                        cluster: cluster_id,
                        weight: (rng.random_range(0.5..1.5f64) * 1e4).round() / 1e4,
                        ideal_boys: boys,
                        ideal_girls: girls,
                        ideal_total: Some(total as f64),
                        age_years: rng.random_range(15..50) as f64,
                        interview_year: Some(((start + rng.random_range(0.0..1.0)) * 1e3).round() / 1e3),
                        line: 0,
                    });
                }
            }
        }
    }
    out
}

/// Writes the input tables, `dhs_women.csv` and `truth.json` under `dir`.
pub fn write_fixture(s: &Synthetic, dir: &Path) -> Result<DataPaths> {
    let paths = write_dataset(&s.dataset, dir)?;
    write_women(&s.women, &dir.join("dhs_women.csv"))?;
    let truth = dir.join("truth.json");
    fs::write(&truth, serde_json::to_string_pretty(&s.truth)?).map_err(|e| Error::io(&truth, e))?;
    Ok(paths)
}
