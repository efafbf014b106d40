//! State-level SRB model.
//!
//! `s_i ~ N(log N + P_{c,t}, 0.001²)`; `P_c` is AR(1) around
//! `V_{c,t} = α_c D_{c,t+5} + f_c(F_{c,t})` with `F` the log TFR, `α_c`
//! exchangeable normal and `f_c` an RW2 function over the distinct log-TFR
//! values of the state.

mod sampler;

pub use sampler::SrbTarget;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, YearRange};
use crate::mcmc::{self, ChainRng, Diagnostics, McmcConfig, PosteriorDraws};
use crate::priors::{pc_cor1_logdensity, pc_prec_logdensity, rw2_build, PcCor1Prior, PcPrecPrior, Rw2Structure};
use crate::stats::{derive_seed, normal_logpdf, quantiles};
use crate::trajectory::{SummaryRow, Trajectories};

pub const OBS_SD: f64 = 0.001;
pub const DSRB_LAG: i32 = 5;
/// SD of the log SRB estimates in the original application.
pub const REFERENCE_NU: f64 = 0.042;
pub const RHAT_THRESHOLD: f64 = 1.1;
pub const KNOT_ROUNDING: f64 = 1e-4;

const STAGE_COVARIATE: u64 = 0x434f_5641;
const STAGE_PROJECT: u64 = 0x5052_4f4a;

pub fn regression_mean(alpha: f64, d_lagged: f64, f_value: f64) -> f64 {
    alpha * d_lagged + f_value
}

/// Stationary AR(1) log density of `p` around the mean path `v`.
pub fn ar1_logdensity(p: &[f64], v: &[f64], rho: f64, tau_eps: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("AR(1) correlation {rho} outside (-1, 1)")));
    }
    if !(tau_eps > 0.0) || p.len() != v.len() {
        return Err(Error::Domain("AR(1) needs tau > 0 and equal-length paths".into()));
    }
    let Some((&p0, _)) = p.split_first() else {
        return Ok(0.0);
    };
    let var = 1.0 / tau_eps;
    let mut lp = normal_logpdf(p0, v[0], var / (1.0 - rho * rho));
    for t in 1..p.len() {
        lp += normal_logpdf(p[t], v[t] + rho * (p[t - 1] - v[t - 1]), var);
    }
    Ok(lp)
}

/// Precision matrix of a stationary AR(1) path of length `n`.
pub fn ar1_precision(n: usize, rho: f64, tau_eps: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    for t in 0..n {
        let edge = t == 0 || t == n - 1;
        q[(t, t)] = tau_eps * if edge { 1.0 } else { 1.0 + rho * rho };
        if t + 1 < n {
            q[(t, t + 1)] = -tau_eps * rho;
            q[(t + 1, t)] = -tau_eps * rho;
        }
    }
    if n == 1 {
        q[(0, 0)] = tau_eps * (1.0 - rho * rho);
    }
    q
}

/// Stationary AR(1) covariance between the time points `times`.
pub fn ar1_covariance(times: &[usize], rho: f64, tau_eps: f64) -> DMatrix<f64> {
    let v0 = 1.0 / (tau_eps * (1.0 - rho * rho));
    DMatrix::from_fn(times.len(), times.len(), |i, j| {
        v0 * rho.powi((times[i] as i64 - times[j] as i64).unsigned_abs() as i32)
    })
}

/// Distinct rounded values of `log_tfr` (sorted) and the knot of each entry.
pub fn tfr_knots(log_tfr: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let round = |x: f64| (x / KNOT_ROUNDING).round() as i64;
    let mut keys: Vec<i64> = log_tfr.iter().map(|&x| round(x)).collect();
    keys.sort_unstable();
    keys.dedup();
    let index = log_tfr
        .iter()
        .map(|&x| keys.binary_search(&round(x)).expect("knot present"))
        .collect();
    (keys.iter().map(|&k| k as f64 * KNOT_ROUNDING).collect(), index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrbPriors {
    pub rho: PcCor1Prior,
    pub eps: PcPrecPrior,
    /// On `log(tau_c / eta_c)`.
    pub rw2: PcPrecPrior,
    pub alpha: PcPrecPrior,
}

impl SrbPriors {
    pub fn with_nu(nu: f64) -> Result<Self> {
        Ok(SrbPriors {
            rho: PcCor1Prior::new(0.8, 0.5)?,
            eps: PcPrecPrior::new(1.0, 0.01)?,
            rw2: PcPrecPrior::new(nu, 0.01)?,
            alpha: PcPrecPrior::new(nu, 0.01)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SrbOptions {
    /// Overrides the SD of the log SRB estimates as the PC-prior scale.
    pub nu: Option<f64>,
}

/// Per-state hyperparameters on the sampling scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateHypers {
    pub rho: f64,
    pub log_prec_eps: f64,
    /// `log(tau_c / eta_c)`
    pub log_prec_rw2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    pub hypers: StateHypers,
    pub alpha: f64,
    /// Values at the state's knots.
    pub f: Vec<f64>,
    /// Latent path over the fit years.
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrbParams {
    pub states: Vec<StateParams>,
    pub log_prec_alpha: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct StateSetup {
    pub code: String,
    /// Fit-year offsets carrying an estimate, ascending.
    pub obs_t: Vec<usize>,
    /// `log s - log N` at `obs_t`.
    pub y: DVector<f64>,
    pub rw2: Rw2Structure,
    /// Knot index for every year of the SRB model window.
    pub knot_of_year: Vec<usize>,
    /// `H B Q⁺ B' H'` and `H B N⁺ B' H'` over the observed cells.
    pub g_rw2: DMatrix<f64>,
    pub g_null: DMatrix<f64>,
}

impl StateSetup {
    pub fn n_knots(&self) -> usize {
        self.rw2.len()
    }
}

/// Data-dependent structure shared by all chains.
#[derive(Debug, Clone)]
pub struct SrbModel {
    pub(crate) states: Vec<StateSetup>,
    pub fit_years: YearRange,
    pub baseline: f64,
    pub priors: SrbPriors,
    pub nu: f64,
}

impl SrbModel {
    pub fn new(d: &Dataset, opts: &SrbOptions) -> Result<Self> {
        let nu = match opts.nu {
            Some(nu) => nu,
            None => {
                let nu = d.log_srb_sd();
                if (nu / REFERENCE_NU - 1.0).abs() > 0.2 {
                    log::warn!("SD of log SRB estimates is {nu:.4}, more than 20% away from {REFERENCE_NU}");
                }
                nu
            }
        };
        if !(nu > 0.0) {
            return Err(Error::InvalidData("log SRB estimates have zero spread; cannot set PC prior scale".into()));
        }
        Self::with_priors(d, SrbPriors::with_nu(nu)?, nu)
    }

    pub fn with_priors(d: &Dataset, priors: SrbPriors, nu: f64) -> Result<Self> {
        let last = d
            .last_srb_year()
            .ok_or_else(|| Error::InvalidData("no SRB estimates".into()))?;
        let model_years = YearRange::SRB_MODEL;
        let fit_years = YearRange::new(model_years.start, last)?;
        let log_n = d.baseline.ln();
        let mut states = Vec::with_capacity(d.states.len());
        for (c, code) in d.states.codes().iter().enumerate() {
            let mut log_tfr = Vec::with_capacity(model_years.len());
            for y in model_years.years() {
                match d.tfr.get(c, y) {
                    Some(v) if v > 0.0 => log_tfr.push(v.ln()),
                    _ => {
                        return Err(Error::MissingCovariate {
                            state: code.clone(),
                            year: y,
                        })
                    }
                }
            }
            let (knots, knot_of_year) = tfr_knots(&log_tfr);
            let rw2 = rw2_build(&knots)?;
            let (obs_t, y): (Vec<usize>, Vec<f64>) = d
                .srb_estimates
                .present(c)
                .filter(|(yr, _)| fit_years.contains(*yr))
                .map(|(yr, s)| ((yr - model_years.start) as usize, s.ln() - log_n))
                .unzip();
            let h_b = DMatrix::from_fn(obs_t.len(), knots.len(), |i, k| {
                (knot_of_year[obs_t[i]] == k) as u8 as f64
            });
            let g_rw2 = &h_b * rw2.generalized_inverse() * h_b.transpose();
            let g_null = &h_b * rw2.null_covariance() * h_b.transpose();
            states.push(StateSetup {
                code: code.clone(),
                obs_t,
                y: DVector::from_vec(y),
                rw2,
                knot_of_year,
                g_rw2,
                g_null,
            });
        }
        Ok(SrbModel {
            states,
            fit_years,
            baseline: d.baseline,
            priors,
            nu,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_codes(&self) -> Vec<String> {
        self.states.iter().map(|s| s.code.clone()).collect()
    }

    /// Sorted knots (log TFR) of state `c`.
    pub fn knots(&self, c: usize) -> &[f64] {
        self.states[c].rw2.knots()
    }

    pub fn rw2(&self, c: usize) -> &Rw2Structure {
        &self.states[c].rw2
    }

    pub fn knot_of_year(&self, c: usize, year: i32) -> usize {
        self.states[c].knot_of_year[(year - YearRange::SRB_MODEL.start) as usize]
    }

    pub fn n_fit_years(&self) -> usize {
        self.fit_years.len()
    }

    /// `D_{c,t+5}` for every state and every year of the SRB window, from
    /// pooled draw `draw` of the DSRB trajectories.
    pub fn lagged_dsrb(&self, dsrb: &Trajectories, draw: usize) -> Result<Vec<Vec<f64>>> {
        self.states
            .iter()
            .map(|s| {
                let c = dsrb.state_index(&s.code);
                YearRange::SRB_MODEL
                    .years()
                    .map(|y| {
                        let target = y + DSRB_LAG;
                        match c {
                            Some(c) if dsrb.years.contains(target) && draw < dsrb.n_draws => {
                                let v = dsrb.get(c, target)[draw];
                                if v.is_finite() {
                                    return Ok(v);
                                }
                                Err(Error::MissingCovariate {
                                    state: s.code.clone(),
                                    year: target,
                                })
                            }
                            _ => Err(Error::MissingCovariate {
                                state: s.code.clone(),
                                year: target,
                            }),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    // Flat parameter layout: [rho, log_prec_eps, log_prec_rw2] per state,
    // log_prec_alpha, then per state [P over fit years, f at knots, f_level,
    // f_slope, alpha].

    pub(crate) fn hyper_offset(&self, c: usize) -> usize {
        3 * c
    }

    pub(crate) fn alpha_prec_offset(&self) -> usize {
        3 * self.n_states()
    }

    pub(crate) fn latent_len(&self, c: usize) -> usize {
        self.n_fit_years() + self.states[c].n_knots() + 3
    }

    pub(crate) fn latent_offset(&self, c: usize) -> usize {
        self.alpha_prec_offset() + 1 + (0..c).map(|k| self.latent_len(k)).sum::<usize>()
    }

    pub fn n_params(&self) -> usize {
        self.latent_offset(self.n_states())
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        for s in &self.states {
            let c = &s.code;
            names.extend([format!("rho[{c}]"), format!("log_prec_eps[{c}]"), format!("log_prec_rw2[{c}]")]);
        }
        names.push("log_prec_alpha".into());
        for s in &self.states {
            let c = &s.code;
            names.extend(self.fit_years.years().map(|y| format!("P[{c},{y}]")));
            names.extend((0..s.n_knots()).map(|k| format!("f[{c},{k}]")));
            names.extend([format!("f_level[{c}]"), format!("f_slope[{c}]"), format!("alpha[{c}]")]);
        }
        names
    }

    pub fn to_flat(&self, p: &SrbParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for s in &p.states {
            v.extend([s.hypers.rho, s.hypers.log_prec_eps, s.hypers.log_prec_rw2]);
        }
        v.push(p.log_prec_alpha);
        for (c, s) in p.states.iter().enumerate() {
            let (level, slope) = self.states[c].rw2.level_slope(&s.f);
            v.extend(&s.p);
            v.extend(&s.f);
            v.extend([level, slope, s.alpha]);
        }
        v
    }

    pub fn from_flat(&self, v: &[f64]) -> SrbParams {
        let t = self.n_fit_years();
        let states = (0..self.n_states())
            .map(|c| {
                let h = self.hyper_offset(c);
                let o = self.latent_offset(c);
                let k = self.states[c].n_knots();
                StateParams {
                    hypers: StateHypers {
                        rho: v[h],
                        log_prec_eps: v[h + 1],
                        log_prec_rw2: v[h + 2],
                    },
                    p: v[o..o + t].to_vec(),
                    f: v[o + t..o + t + k].to_vec(),
                    alpha: v[o + t + k + 2],
                }
            })
            .collect();
        SrbParams {
            states,
            log_prec_alpha: v[self.alpha_prec_offset()],
        }
    }

    /// Unscaled RW2 precision `tau_c` from `log(tau_c / eta_c)`.
    pub fn rw2_precision(&self, c: usize, log_prec_rw2: f64) -> f64 {
        self.states[c].rw2.scale() * log_prec_rw2.exp()
    }

    /// Log prior of one state's hyperparameters.
    pub fn state_hyper_logprior(&self, h: &StateHypers) -> f64 {
        let Ok(lp_rho) = pc_cor1_logdensity(h.rho, &self.priors.rho) else {
            return f64::NEG_INFINITY;
        };
        lp_rho + pc_prec_logdensity(h.log_prec_eps, &self.priors.eps) + pc_prec_logdensity(h.log_prec_rw2, &self.priors.rw2)
    }

    /// Mean path `V` over the fit years.
    pub fn mean_path(&self, c: usize, alpha: f64, f: &[f64], lagged: &[f64]) -> Vec<f64> {
        (0..self.n_fit_years())
            .map(|t| regression_mean(alpha, lagged[t], f[self.states[c].knot_of_year[t]]))
            .collect()
    }
}

/// Full joint log posterior of all parameters, latent field included.
pub fn srb_logposterior(params: &SrbParams, model: &SrbModel, lagged: &[Vec<f64>]) -> f64 {
    let tau_alpha = params.log_prec_alpha.exp();
    let mut lp = pc_prec_logdensity(params.log_prec_alpha, &model.priors.alpha);
    for (c, sp) in params.states.iter().enumerate() {
        let st = &model.states[c];
        let h = sp.hypers;
        lp += model.state_hyper_logprior(&h);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        for (i, &t) in st.obs_t.iter().enumerate() {
            lp += normal_logpdf(st.y[i], sp.p[t], OBS_SD * OBS_SD);
        }
        let v = model.mean_path(c, sp.alpha, &sp.f, &lagged[c]);
        match ar1_logdensity(&sp.p, &v, h.rho, h.log_prec_eps.exp()) {
            Ok(a) => lp += a,
            Err(_) => return f64::NEG_INFINITY,
        }
        lp += normal_logpdf(sp.alpha, 0.0, 1.0 / tau_alpha);
        match st.rw2.log_prior(&sp.f, model.rw2_precision(c, h.log_prec_rw2)) {
            Ok(a) => lp += a,
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    lp
}

pub(crate) fn log_2pi() -> f64 {
    (2.0 * PI).ln()
}

#[derive(Debug, Clone)]
pub struct SrbFit {
    pub draws: PosteriorDraws,
    pub rhat: Diagnostics,
    pub converged: bool,
}

/// One distinct DSRB draw per chain where possible.
pub fn chain_covariate_draws(n_draws: usize, chains: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChainRng::seed_from_u64(derive_seed(seed, STAGE_COVARIATE, 0));
    if chains <= n_draws {
        rand::seq::index::sample(&mut rng, n_draws, chains).into_vec()
    } else {
        use rand::Rng;
        (0..chains).map(|_| rng.random_range(0..n_draws)).collect()
    }
}

pub fn fit_srb(d: &Dataset, dsrb: &Trajectories, cfg: &McmcConfig, opts: &SrbOptions) -> Result<(SrbModel, SrbFit)> {
    cfg.validate()?;
    let model = SrbModel::new(d, opts)?;
    let fit = fit_srb_model(&model, dsrb, cfg)?;
    Ok((model, fit))
}

pub fn fit_srb_model(model: &SrbModel, dsrb: &Trajectories, cfg: &McmcConfig) -> Result<SrbFit> {
    if dsrb.n_draws == 0 {
        return Err(Error::InvalidData("DSRB trajectories hold no draws".into()));
    }
    let picks = chain_covariate_draws(dsrb.n_draws, cfg.chains, cfg.seed);
    let targets = picks
        .iter()
        .map(|&g| Ok(SrbTarget::new(model, model.lagged_dsrb(dsrb, g)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut draws = mcmc::run_chains_with(|c| &targets[c], cfg)?;
    draws.meta.model = "srb".into();
    draws.meta.covariate_draws = picks;
    let rhat = mcmc::gelman_rubin(&draws);
    let converged = crate::dsrb::converged(&rhat, RHAT_THRESHOLD);
    if !converged {
        log::warn!("SRB fit did not converge: max R-hat {:.3}", rhat.max_finite());
    }
    Ok(SrbFit { draws, rhat, converged })
}

fn pooled(draws: &PosteriorDraws, name: &str) -> Result<Vec<f64>> {
    draws
        .pooled(name)
        .ok_or_else(|| Error::InvalidData(format!("SRB draws have no parameter {name}")))
}

/// Posterior trajectories of the latent multiplier `P` over
/// `1990..=horizon`: fitted years come from the draws, later years are
/// simulated forward through each draw's AR(1).
pub fn project_latent(draws: &PosteriorDraws, model: &SrbModel, dsrb: &Trajectories, horizon: i32) -> Result<Trajectories> {
    let years = YearRange::new(YearRange::SRB_MODEL.start, horizon)?;
    if horizon > YearRange::SRB_MODEL.end {
        return Err(Error::Domain(format!("projection horizon {horizon} beyond {}", YearRange::SRB_MODEL.end)));
    }
    let picks = &draws.meta.covariate_draws;
    if picks.len() != draws.chains() {
        return Err(Error::InvalidData("SRB draws do not record their DSRB draw per chain".into()));
    }
    let lagged: Vec<Vec<Vec<f64>>> = picks
        .iter()
        .map(|&g| model.lagged_dsrb(dsrb, g))
        .collect::<Result<_>>()?;
    let n = draws.total();
    let kept = draws.kept();
    let fit_end = model.fit_years.end;
    let mut out = Trajectories::zeros(model.state_codes(), years, n);
    for (c, st) in model.states.iter().enumerate() {
        let code = &st.code;
        let rho = pooled(draws, &format!("rho[{code}]"))?;
        let lpe = pooled(draws, &format!("log_prec_eps[{code}]"))?;
        let alpha = pooled(draws, &format!("alpha[{code}]"))?;
        let f: Vec<Vec<f64>> = (0..st.n_knots())
            .map(|k| pooled(draws, &format!("f[{code},{k}]")))
            .collect::<Result<_>>()?;
        for y in years.years().filter(|&y| y <= fit_end) {
            let p = pooled(draws, &format!("P[{code},{y}]"))?;
            out.get_mut(c, y).copy_from_slice(&p);
        }
        let mut rng = ChainRng::seed_from_u64(derive_seed(draws.meta.seed, STAGE_PROJECT, c as u64));
        let v_at = |g: usize, y: i32| -> f64 {
            let t = (y - YearRange::SRB_MODEL.start) as usize;
            regression_mean(alpha[g], lagged[g / kept][c][t], f[st.knot_of_year[t]][g])
        };
        for g in 0..n {
            let sd = (-lpe[g]).exp().sqrt();
            let noise = Normal::new(0.0, sd).map_err(|e| Error::Domain(format!("innovation SD {sd}: {e}")))?;
            let mut prev = out.get(c, fit_end)[g];
            let mut prev_v = v_at(g, fit_end);
            for y in fit_end + 1..=horizon {
                let v = v_at(g, y);
                let p = v + rho[g] * (prev - prev_v) + noise.sample(&mut rng);
                out.get_mut(c, y)[g] = p;
                prev = p;
                prev_v = v;
            }
        }
    }
    Ok(out)
}

/// SRB trajectories `R = N exp(P)` over `1990..=horizon`.
pub fn project_srb(draws: &PosteriorDraws, model: &SrbModel, dsrb: &Trajectories, horizon: i32) -> Result<Trajectories> {
    let log_n = model.baseline.ln();
    Ok(project_latent(draws, model, dsrb, horizon)?.map(|p| (log_n + p).exp()))
}

/// Quantiles of `f_c` at each knot; key `(state, tfr)` with TFR on the
/// natural scale.
pub fn tfr_effect_summary(draws: &PosteriorDraws, model: &SrbModel, probs: &[f64]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for st in &model.states {
        for (k, knot) in st.rw2.knots().iter().enumerate() {
            let f = pooled(draws, &format!("f[{},{k}]", st.code))?;
            rows.push(SummaryRow {
                key: vec![st.code.clone(), format!("{:.4}", knot.exp())],
                quantiles: quantiles(&f, probs),
            });
        }
    }
    Ok(rows)
}

/// Quantiles of `exp(alpha_c)` per state.
pub fn dsrb_effect_summary(draws: &PosteriorDraws, model: &SrbModel, probs: &[f64]) -> Result<Vec<SummaryRow>> {
    model
        .states
        .iter()
        .map(|st| {
            let a: Vec<f64> = pooled(draws, &format!("alpha[{}]", st.code))?.iter().map(|a| a.exp()).collect();
            Ok(SummaryRow {
                key: vec![st.code.clone()],
                quantiles: quantiles(&a, probs),
            })
        })
        .collect()
}
