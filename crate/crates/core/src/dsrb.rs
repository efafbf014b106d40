//! Desired sex ratio at birth: a scaled logistic in log time per state,
//! `exp(D) = 1 + δ·logistic(φ·log t + ζ)`, with hierarchical normals on
//! `(δ, φ, ζ)` and a non-sampling error `ω` added to the survey variance.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::ingest::{Dataset, StateIndex, YearRange};
use crate::jackknife::DsrbObservation;
use crate::mcmc::{self, ChainRng, Diagnostics, McmcConfig, ParameterBlock, PosteriorDraws, Target, Transform};
use crate::stats::normal_logpdf;
use crate::trajectory::Trajectories;

pub const MU_BOUND: f64 = 0.5;
pub const SIGMA_MAX: f64 = 2.0;
pub const OMEGA_MIN: f64 = 0.05;
pub const OMEGA_MAX: f64 = 2.0;
pub const RHAT_THRESHOLD: f64 = 1.1;

const HYPER_NAMES: [&str; 7] = [
    "mu_delta",
    "mu_phi",
    "mu_zeta",
    "sigma_delta",
    "sigma_phi",
    "sigma_zeta",
    "omega",
];

/// `t = 1` is the first year of the model window.
pub fn time_index(year: i32) -> u32 {
    (year - YearRange::DSRB_MODEL.start + 1) as u32
}

pub fn dsrb_delta(t_index: u32, delta: f64, phi: f64, zeta: f64) -> f64 {
    let x = phi * (t_index as f64).ln() + zeta;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    delta * s
}

/// log DSRB `D = log(1 + Δ)`; NaN when `Δ ≤ -1`.
pub fn dsrb_log(t_index: u32, delta: f64, phi: f64, zeta: f64) -> f64 {
    let d = dsrb_delta(t_index, delta, phi, zeta);
    if d <= -1.0 {
        f64::NAN
    } else {
        d.ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrbParams {
    pub delta: Vec<f64>,
    pub phi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
    pub omega: f64,
}

impl DsrbParams {
    pub fn from_flat(v: &[f64], n_states: usize) -> Self {
        let c = n_states;
        let h = &v[3 * c..];
        DsrbParams {
            delta: v[..c].to_vec(),
            phi: v[c..2 * c].to_vec(),
            zeta: v[2 * c..3 * c].to_vec(),
            mu: [h[0], h[1], h[2]],
            sigma: [h[3], h[4], h[5]],
            omega: h[6],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.delta.len() + 7);
        v.extend(&self.delta);
        v.extend(&self.phi);
        v.extend(&self.zeta);
        v.extend(self.mu);
        v.extend(self.sigma);
        v.push(self.omega);
        v
    }

    fn in_support(&self) -> bool {
        self.mu.iter().all(|m| (-MU_BOUND..=MU_BOUND).contains(m))
            && self.sigma.iter().all(|s| *s > 0.0 && *s <= SIGMA_MAX)
            && (OMEGA_MIN..=OMEGA_MAX).contains(&self.omega)
    }
}

#[derive(Debug, Clone, Copy)]
struct Obs {
    state: usize,
    t: u32,
    d: f64,
    var: f64,
}

/// Observations resolved against a state index, grouped for conditional
/// density evaluation.
#[derive(Debug, Clone)]
pub struct DsrbModel {
    states: Vec<String>,
    obs: Vec<Obs>,
    by_state: Vec<Vec<usize>>,
}

impl DsrbModel {
    pub fn new(states: &StateIndex, observations: &[DsrbObservation]) -> Result<Self> {
        let mut obs = Vec::with_capacity(observations.len());
        let mut by_state = vec![Vec::new(); states.len()];
        for o in observations {
            let c = states
                .position(&o.state)
                .ok_or_else(|| Error::InvalidData(format!("DSRB observation for unknown state {}", o.state)))?;
            if o.ref_year < YearRange::DSRB_MODEL.start {
                return Err(Error::InvalidData(format!(
                    "DSRB observation {}/{} has reference year {} before the model window",
                    o.state, o.survey_id, o.ref_year
                )));
            }
            if !(o.log_dsrb.is_finite() && o.sampling_var.is_finite() && o.sampling_var >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "DSRB observation {}/{} is not finite",
                    o.state, o.survey_id
                )));
            }
            by_state[c].push(obs.len());
            obs.push(Obs {
                state: c,
                t: time_index(o.ref_year),
                d: o.log_dsrb,
                var: o.sampling_var,
            });
        }
        Ok(DsrbModel {
            states: states.codes().to_vec(),
            obs,
            by_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_params(&self) -> usize {
        3 * self.n_states() + HYPER_NAMES.len()
    }

    pub fn states_with_data(&self) -> usize {
        self.by_state.iter().filter(|o| !o.is_empty()).count()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        for p in ["delta", "phi", "zeta"] {
            names.extend(self.states.iter().map(|s| format!("{p}[{s}]")));
        }
        names.extend(HYPER_NAMES.iter().map(|s| s.to_string()));
        names
    }

    fn hyper(&self, v: &[f64], k: usize) -> f64 {
        v[3 * self.n_states() + k]
    }

    fn obs_loglik(&self, i: usize, v: &[f64]) -> f64 {
        let o = self.obs[i];
        let c = self.n_states();
        let mean = dsrb_log(o.t, v[o.state], v[c + o.state], v[2 * c + o.state]);
        let omega = self.hyper(v, 6);
        normal_logpdf(o.d, mean, o.var + omega * omega)
    }

    fn state_loglik(&self, state: usize, v: &[f64]) -> f64 {
        self.by_state[state].iter().map(|&i| self.obs_loglik(i, v)).sum()
    }

    /// Hierarchical term for component `k` (0 δ, 1 φ, 2 ζ) of every state.
    fn group_logprior(&self, k: usize, v: &[f64]) -> f64 {
        let c = self.n_states();
        let (mu, sigma) = (self.hyper(v, k), self.hyper(v, 3 + k));
        v[k * c..(k + 1) * c]
            .iter()
            .map(|&x| normal_logpdf(x, mu, sigma * sigma))
            .sum()
    }

    fn hyper_support(&self, v: &[f64]) -> bool {
        DsrbParams::from_flat(v, self.n_states()).in_support()
    }

    pub fn log_posterior(&self, v: &[f64]) -> f64 {
        let c = self.n_states();
        if !self.hyper_support(v) || v[..c].iter().any(|&d| d <= -1.0) {
            return f64::NEG_INFINITY;
        }
        let lik: f64 = (0..self.obs.len()).map(|i| self.obs_loglik(i, v)).sum();
        let prior: f64 = (0..3).map(|k| self.group_logprior(k, v)).sum();
        lik + prior
    }
}

/// Full log posterior (uniform hyperpriors contribute constants).
pub fn dsrb_logposterior(params: &DsrbParams, states: &StateIndex, obs: &[DsrbObservation]) -> Result<f64> {
    let model = DsrbModel::new(states, obs)?;
    if params.delta.len() != states.len() || params.phi.len() != states.len() || params.zeta.len() != states.len() {
        return Err(Error::Domain("parameter vectors do not match the state count".into()));
    }
    Ok(model.log_posterior(&params.to_flat()))
}

impl Target for DsrbModel {
    fn blocks(&self) -> Vec<ParameterBlock> {
        let c = self.n_states();
        self.param_names()
            .iter()
            .enumerate()
            .map(|(i, name)| {
                // Group means and SDs have truncated conjugate conditionals.
                let (tr, scale) = match i.checked_sub(3 * c) {
                    None => (Transform::Identity, 0.1),
                    Some(0..=5) => return ParameterBlock::gibbs(name, vec![name.clone()], false),
                    Some(_) => (Transform::Bounded { lo: OMEGA_MIN, hi: OMEGA_MAX }, 0.5),
                };
                ParameterBlock::scalar(name, tr, scale)
            })
            .collect()
    }

    fn initial(&self, rng: &mut ChainRng) -> Vec<f64> {
        let c = self.n_states();
        let mut v = vec![0.0; self.n_params()];
        for k in 0..3 {
            v[3 * c + k] = rng.random_range(-0.25..0.25);
            v[3 * c + 3 + k] = rng.random_range(0.1..0.8);
        }
        v[3 * c + 6] = rng.random_range(0.06..0.3);
        for k in 0..3 {
            let normal = Normal::new(v[3 * c + k], v[3 * c + 3 + k]).expect("positive sd");
            for s in 0..c {
                loop {
                    let x = normal.sample(rng);
                    if k != 0 || x > -0.9 {
                        v[k * c + s] = x;
                        break;
                    }
                }
            }
        }
        v
    }

    fn log_density(&self, params: &[f64]) -> f64 {
        self.log_posterior(params)
    }

    fn block_log_density(&self, block: usize, v: &[f64]) -> f64 {
        let c = self.n_states();
        if block < 3 * c {
            let (k, s) = (block / c, block % c);
            if k == 0 && v[s] <= -1.0 {
                return f64::NEG_INFINITY;
            }
            let (mu, sigma) = (self.hyper(v, k), self.hyper(v, 3 + k));
            return self.state_loglik(s, v) + normal_logpdf(v[block], mu, sigma * sigma);
        }
        if !self.hyper_support(v) {
            return f64::NEG_INFINITY;
        }
        match block - 3 * c {
            h @ 0..=2 => self.group_logprior(h, v),
            h @ 3..=5 => self.group_logprior(h - 3, v),
            _ => (0..self.obs.len()).map(|i| self.obs_loglik(i, v)).sum(),
        }
    }

    /// Conjugate draw of a group mean or SD, followed by a joint move of the
    /// whole group (shift for means, rescale for SDs) that keeps the state
    /// values' standardized deviations fixed; the latter counters the funnel
    /// of the centered hierarchy.
    fn gibbs(&self, block: usize, v: &mut [f64], rng: &mut ChainRng) {
        let c = self.n_states();
        let h = block - 3 * c;
        let k = h % 3;
        let xs = &v[k * c..(k + 1) * c];
        v[block] = if h < 3 {
            let mean = xs.iter().sum::<f64>() / c as f64;
            truncated_normal(mean, self.hyper(v, 3 + k) / (c as f64).sqrt(), -MU_BOUND, MU_BOUND, rng)
        } else {
            let mu = self.hyper(v, k);
            let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
            // sigma^-2 ~ Gamma((C - 1)/2, ss/2) restricted to sigma <= SIGMA_MAX.
            let prec = truncated_gamma((c as f64 - 1.0) / 2.0, ss / 2.0, SIGMA_MAX.powi(-2), rng);
            prec.sqrt().recip()
        };
        self.group_move(k, h >= 3, v, rng);
    }
}

impl DsrbModel {
    fn group_move(&self, k: usize, rescale: bool, v: &mut [f64], rng: &mut ChainRng) {
        const STEP: f64 = 0.2;
        let c = self.n_states();
        let eps = STEP * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let mu = self.hyper(v, k);
        let mut prop = v.to_vec();
        let log_jacobian = if rescale {
            let scale = eps.exp();
            prop[3 * c + 3 + k] *= scale;
            for x in &mut prop[k * c..(k + 1) * c] {
                *x = mu + (*x - mu) * scale;
            }
            (c + 1) as f64 * eps
        } else {
            prop[3 * c + k] += eps;
            for x in &mut prop[k * c..(k + 1) * c] {
                *x += eps;
            }
            0.0
        };
        let ratio = self.log_posterior(&prop) - self.log_posterior(v) + log_jacobian;
        if rng.random::<f64>().ln() < ratio {
            v.copy_from_slice(&prop);
        }
    }
}

const REJECTION_TRIES: usize = 64;

fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut ChainRng) -> f64 {
    let normal = Normal::new(mean, sd).expect("positive sd");
    for _ in 0..REJECTION_TRIES {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    let dist = statrs::distribution::Normal::new(mean, sd).expect("positive sd");
    let (a, b) = (dist.cdf(lo), dist.cdf(hi));
    if b - a > 0.0 {
        dist.inverse_cdf(rng.random_range(a..b)).clamp(lo, hi)
    } else if mean < lo {
        lo
    } else {
        hi
    }
}

/// Gamma(shape, rate) conditioned on `x >= lo`.
fn truncated_gamma(shape: f64, rate: f64, lo: f64, rng: &mut ChainRng) -> f64 {
    let gamma = rand_distr::Gamma::new(shape, 1.0 / rate).expect("positive shape and rate");
    for _ in 0..REJECTION_TRIES {
        let x = gamma.sample(rng);
        if x >= lo {
            return x;
        }
    }
    let dist = statrs::distribution::Gamma::new(shape, rate).expect("positive shape and rate");
    let a = dist.cdf(lo);
    if a < 1.0 {
        dist.inverse_cdf(rng.random_range(a..1.0)).max(lo)
    } else {
        lo
    }
}

#[derive(Debug, Clone)]
pub struct DsrbFit {
    pub draws: PosteriorDraws,
    pub rhat: Diagnostics,
    /// All finite split R-hat values below [`RHAT_THRESHOLD`].
    pub converged: bool,
}

pub fn converged(rhat: &Diagnostics, threshold: f64) -> bool {
    rhat.values.values().all(|r| r.is_finite() && *r < threshold)
}

pub fn fit_dsrb_obs(states: &StateIndex, obs: &[DsrbObservation], cfg: &McmcConfig) -> Result<DsrbFit> {
    let model = DsrbModel::new(states, obs)?;
    if model.states_with_data() < 2 {
        return Err(Error::InvalidData(format!(
            "DSRB hierarchy needs observations for at least 2 states, found {}",
            model.states_with_data()
        )));
    }
    let mut draws = mcmc::run_chains(&model, cfg)?;
    draws.meta.model = "dsrb".into();
    let rhat = mcmc::gelman_rubin(&draws);
    let ok = converged(&rhat, RHAT_THRESHOLD);
    if !ok {
        log::warn!("DSRB fit did not converge: max R-hat {:.3}", rhat.max_finite());
    }
    Ok(DsrbFit {
        draws,
        rhat,
        converged: ok,
    })
}

pub fn fit_dsrb(d: &Dataset, cfg: &McmcConfig) -> Result<DsrbFit> {
    fit_dsrb_obs(&d.states, &d.dsrb_obs, cfg)
}

/// Per-draw log DSRB over `years` for every state present in the draws.
pub fn project_dsrb(draws: &PosteriorDraws, states: &[String], years: YearRange) -> Result<Trajectories> {
    let n = draws.total();
    let mut out = Trajectories::zeros(states.to_vec(), years, n);
    for (c, s) in states.iter().enumerate() {
        let pooled = |p: &str| {
            draws
                .pooled(&format!("{p}[{s}]"))
                .ok_or_else(|| Error::InvalidData(format!("draws have no {p}[{s}]")))
        };
        let (delta, phi, zeta) = (pooled("delta")?, pooled("phi")?, pooled("zeta")?);
        for y in years.years() {
            let t = time_index(y);
            if t < 1 {
                return Err(Error::Domain(format!("year {y} precedes the DSRB time origin")));
            }
            let slot = out.get_mut(c, y);
            for g in 0..n {
                slot[g] = dsrb_log(t, delta[g], phi[g], zeta[g]);
            }
        }
    }
    Ok(out)
}

/// Draws the full parameter vector from the prior restricted to `δ_c > -1`
/// for all states (whole-vector rejection, so the restriction is exact).
pub fn sample_prior(n_states: usize, rng: &mut impl Rng) -> DsrbParams {
    loop {
        let mu = [0; 3].map(|_| rng.random_range(-MU_BOUND..MU_BOUND));
        let sigma = [0; 3].map(|_| rng.random_range(0.0..SIGMA_MAX));
        let omega = rng.random_range(OMEGA_MIN..OMEGA_MAX);
        let mut draw = |k: usize| -> Vec<f64> {
            let n = Normal::new(mu[k], sigma[k]).expect("finite");
            (0..n_states).map(|_| n.sample(rng)).collect()
        };
        let (delta, phi, zeta) = (draw(0), draw(1), draw(2));
        if delta.iter().all(|&d| d > -1.0) {
            return DsrbParams {
                delta,
                phi,
                zeta,
                mu,
                sigma,
                omega,
            };
        }
    }
}

/// Simulates one observation per `(state, year)` pair given parameters.
pub fn simulate_observations(
    params: &DsrbParams,
    states: &StateIndex,
    years: &[i32],
    sampling_var: f64,
    rng: &mut impl Rng,
) -> Vec<DsrbObservation> {
    let sd = (sampling_var + params.omega * params.omega).sqrt();
    let mut out = Vec::new();
    for (c, code) in states.codes().iter().enumerate() {
        for &y in years {
            let mean = dsrb_log(time_index(y), params.delta[c], params.phi[c], params.zeta[c]);
            let noise: f64 = Normal::new(0.0, sd).expect("finite").sample(rng);
            out.push(DsrbObservation {
                state: code.clone(),
                ref_year: y,
                log_dsrb: mean + noise,
                sampling_var,
                survey_id: format!("SIM{y}"),
            });
        }
    }
    out
}
