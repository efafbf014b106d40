//! Blocked sampler for the SRB posterior. Hyperparameters move by Metropolis
//! on their marginal posterior, with the Gaussian latent field
//! `(P, f, alpha)` integrated out over the observed cells; the latent field
//! is drawn exactly from its Gaussian full conditional when a draw is kept.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ar1_covariance, ar1_precision, log_2pi, SrbModel, StateHypers, OBS_SD};
use crate::mcmc::{ChainRng, ParameterBlock, Target, Transform};
use crate::priors::pc_prec_logdensity;

/// The SRB posterior for one chain, conditional on one DSRB draw.
pub struct SrbTarget<'a> {
    model: &'a SrbModel,
    /// `D_{c,t+5}` over the SRB model window.
    lagged: Vec<Vec<f64>>,
    /// Lagged DSRB at each state's observed cells.
    lagged_obs: Vec<DVector<f64>>,
    /// When set, hyperparameters stay at these values and only the latent
    /// field is sampled.
    fixed_hypers: Option<Vec<f64>>,
}

pub(crate) struct LatentConditional {
    pub mean: DVector<f64>,
    pub chol: Cholesky<f64, Dyn>,
}

impl<'a> SrbTarget<'a> {
    pub fn new(model: &'a SrbModel, lagged: Vec<Vec<f64>>) -> Self {
        let lagged_obs = model
            .states
            .iter()
            .zip(&lagged)
            .map(|(s, d)| DVector::from_iterator(s.obs_t.len(), s.obs_t.iter().map(|&t| d[t])))
            .collect();
        SrbTarget {
            model,
            lagged,
            lagged_obs,
            fixed_hypers: None,
        }
    }

    /// Hold the hyperparameters (first `3C + 1` entries of the flat vector)
    /// fixed; the remaining entries of `hypers` are ignored.
    pub fn with_fixed_hypers(mut self, hypers: &[f64]) -> Self {
        let n = self.model.alpha_prec_offset() + 1;
        self.fixed_hypers = Some(hypers[..n].to_vec());
        self
    }

    pub fn lagged(&self) -> &[Vec<f64>] {
        &self.lagged
    }

    fn hypers(&self, c: usize, v: &[f64]) -> StateHypers {
        let h = self.model.hyper_offset(c);
        StateHypers {
            rho: v[h],
            log_prec_eps: v[h + 1],
            log_prec_rw2: v[h + 2],
        }
    }

    /// `log p(y_c | hyperparameters)` with the latent field integrated out.
    pub fn state_marginal(&self, c: usize, h: &StateHypers, log_prec_alpha: f64) -> f64 {
        let st = &self.model.states[c];
        let n = st.obs_t.len();
        if n == 0 {
            return 0.0;
        }
        if !(h.rho.abs() < 1.0) {
            return f64::NEG_INFINITY;
        }
        let tau_rw2 = self.model.rw2_precision(c, h.log_prec_rw2);
        let d = &self.lagged_obs[c];
        let mut cov = ar1_covariance(&st.obs_t, h.rho, h.log_prec_eps.exp());
        cov += &st.g_rw2 / tau_rw2 + &st.g_null + d * d.transpose() * (-log_prec_alpha).exp();
        for i in 0..n {
            cov[(i, i)] += OBS_SD * OBS_SD;
        }
        let Some(chol) = cov.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let quad = st.y.dot(&chol.solve(&st.y));
        let lp = -0.5 * (n as f64 * log_2pi() + log_det + quad);
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Gaussian full conditional of `(P, f, alpha)` for state `c` in
    /// canonical form, as mean and Cholesky factor of the precision.
    pub(crate) fn latent_conditional(&self, c: usize, h: &StateHypers, log_prec_alpha: f64) -> Option<LatentConditional> {
        let st = &self.model.states[c];
        let t_n = self.model.n_fit_years();
        let k_n = st.n_knots();
        let m = t_n + k_n + 1;
        let d = &self.lagged[c];

        let lambda = ar1_precision(t_n, h.rho, h.log_prec_eps.exp());
        let mut design = DMatrix::zeros(t_n, k_n + 1);
        for t in 0..t_n {
            design[(t, st.knot_of_year[t])] = 1.0;
            design[(t, k_n)] = d[t];
        }
        let lm = &lambda * &design;
        let mut prior_z = design.transpose() * &lm;
        let tau_rw2 = self.model.rw2_precision(c, h.log_prec_rw2);
        let qf = st.rw2.penalty() * tau_rw2 + st.rw2.null_precision();
        let mut top = prior_z.view_mut((0, 0), (k_n, k_n));
        top += &qf;
        prior_z[(k_n, k_n)] += log_prec_alpha.exp();

        let mut a = DMatrix::zeros(m, m);
        a.view_mut((0, 0), (t_n, t_n)).copy_from(&lambda);
        a.view_mut((0, t_n), (t_n, k_n + 1)).copy_from(&(-&lm));
        a.view_mut((t_n, 0), (k_n + 1, t_n)).copy_from(&(-lm.transpose()));
        a.view_mut((t_n, t_n), (k_n + 1, k_n + 1)).copy_from(&prior_z);
        let obs_prec = 1.0 / (OBS_SD * OBS_SD);
        let mut b = DVector::zeros(m);
        for (i, &t) in st.obs_t.iter().enumerate() {
            a[(t, t)] += obs_prec;
            b[t] = st.y[i] * obs_prec;
        }
        let chol = robust_cholesky(a)?;
        let mean = chol.solve(&b);
        Some(LatentConditional { mean, chol })
    }

    /// `log p(P_c, f_c, alpha_c | y, hyperparameters)`.
    pub fn latent_conditional_logdensity(&self, c: usize, v: &[f64]) -> f64 {
        let h = self.hypers(c, v);
        let lpa = v[self.model.alpha_prec_offset()];
        let Some(cond) = self.latent_conditional(c, &h, lpa) else {
            return f64::NEG_INFINITY;
        };
        let x = DVector::from_iterator(cond.mean.len(), self.latent_values(c, v));
        let diff = x - &cond.mean;
        let l = cond.chol.l();
        let lt_diff = l.transpose() * &diff;
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        0.5 * log_det - 0.5 * diff.len() as f64 * log_2pi() - 0.5 * lt_diff.norm_squared()
    }

    /// `(P, f, alpha)` of state `c` from the flat vector.
    fn latent_values<'v>(&self, c: usize, v: &'v [f64]) -> impl Iterator<Item = f64> + 'v {
        let o = self.model.latent_offset(c);
        let t_n = self.model.n_fit_years();
        let k_n = self.model.states[c].n_knots();
        v[o..o + t_n + k_n]
            .iter()
            .copied()
            .chain(std::iter::once(v[o + t_n + k_n + 2]))
    }

    fn draw_latent(&self, c: usize, v: &mut [f64], rng: &mut ChainRng) {
        let h = self.hypers(c, v);
        let lpa = v[self.model.alpha_prec_offset()];
        let cond = self
            .latent_conditional(c, &h, lpa)
            .expect("latent precision is positive definite for finite hyperparameters");
        let m = cond.mean.len();
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = cond.mean
            + cond
                .chol
                .l()
                .tr_solve_lower_triangular(&z)
                .expect("non-singular factor");
        let t_n = self.model.n_fit_years();
        let st = &self.model.states[c];
        let k_n = st.n_knots();
        let o = self.model.latent_offset(c);
        v[o..o + t_n + k_n].copy_from_slice(&x.as_slice()[..t_n + k_n]);
        let (level, slope) = st.rw2.level_slope(&v[o + t_n..o + t_n + k_n]);
        v[o + t_n + k_n] = level;
        v[o + t_n + k_n + 1] = slope;
        v[o + t_n + k_n + 2] = x[t_n + k_n];
    }

    fn state_block_density(&self, c: usize, v: &[f64]) -> f64 {
        let h = self.hypers(c, v);
        let prior = self.model.state_hyper_logprior(&h);
        if !prior.is_finite() {
            return f64::NEG_INFINITY;
        }
        prior + self.state_marginal(c, &h, v[self.model.alpha_prec_offset()])
    }
}

/// Cholesky factor, retrying with a small relative ridge when the matrix is
/// numerically singular (near-unit-root AR(1) with a very stiff RW2).
fn robust_cholesky(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c);
    }
    let scale = a.diagonal().amax();
    if !scale.is_finite() {
        return None;
    }
    [1e-14, 1e-12, 1e-10, 1e-8].iter().find_map(|eps| {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += eps * scale;
        }
        b.cholesky()
    })
}

impl Target for SrbTarget<'_> {
    fn blocks(&self) -> Vec<ParameterBlock> {
        let names = self.model.param_names();
        let n_hyper = self.model.alpha_prec_offset() + 1;
        let mut blocks: Vec<ParameterBlock> = names[..n_hyper]
            .iter()
            .enumerate()
            .map(|(i, name)| {
                if self.fixed_hypers.is_some() {
                    return ParameterBlock::gibbs(name, vec![name.clone()], true);
                }
                match (i < n_hyper - 1).then_some(i % 3) {
                    Some(0) => ParameterBlock::scalar(name, Transform::LogitSymmetric, 0.5),
                    Some(1) => ParameterBlock::scalar(name, Transform::Identity, 0.5),
                    _ => ParameterBlock::scalar(name, Transform::Identity, 1.0),
                }
            })
            .collect();
        for (c, st) in self.model.states.iter().enumerate() {
            let o = self.model.latent_offset(c);
            let coords = names[o..o + self.model.latent_len(c)].to_vec();
            blocks.push(ParameterBlock::gibbs(&format!("latent[{}]", st.code), coords, true));
        }
        blocks
    }

    fn initial(&self, rng: &mut ChainRng) -> Vec<f64> {
        let mut v = vec![0.0; self.model.n_params()];
        if let Some(h) = &self.fixed_hypers {
            v[..h.len()].copy_from_slice(h);
            return v;
        }
        for c in 0..self.model.n_states() {
            let o = self.model.hyper_offset(c);
            v[o] = rng.random_range(0.3..0.95);
            v[o + 1] = rng.random_range(8.0..12.0);
            v[o + 2] = rng.random_range(4.0..10.0);
        }
        v[self.model.alpha_prec_offset()] = rng.random_range(4.0..10.0);
        v
    }

    fn log_density(&self, v: &[f64]) -> f64 {
        let lpa = v[self.model.alpha_prec_offset()];
        let mut lp = pc_prec_logdensity(lpa, &self.model.priors.alpha);
        for c in 0..self.model.n_states() {
            lp += self.state_block_density(c, v);
            if lp == f64::NEG_INFINITY {
                break;
            }
        }
        lp
    }

    fn block_log_density(&self, block: usize, v: &[f64]) -> f64 {
        let n_states = self.model.n_states();
        if block < 3 * n_states {
            return self.state_block_density(block / 3, v);
        }
        if block == 3 * n_states {
            let lpa = v[self.model.alpha_prec_offset()];
            let mut lp = pc_prec_logdensity(lpa, &self.model.priors.alpha);
            for c in 0..n_states {
                lp += self.state_marginal(c, &self.hypers(c, v), lpa);
            }
            return lp;
        }
        0.0
    }

    fn gibbs(&self, block: usize, v: &mut [f64], rng: &mut ChainRng) {
        let first_latent = 3 * self.model.n_states() + 1;
        if block >= first_latent {
            self.draw_latent(block - first_latent, v, rng);
        }
    }
}
