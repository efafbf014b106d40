//! Adaptive Metropolis-within-Gibbs sampler.
//!
//! A model describes its parameter vector as a sequence of [`ParameterBlock`]s.
//! Each sweep visits the blocks in order. Metropolis blocks take a Gaussian
//! random-walk step on the unconstrained scale of their transform (the log
//! Jacobian enters the acceptance ratio). Gibbs blocks are redrawn by the model
//! from an exact conditional, either every sweep or only at kept iterations.
//!
//! Proposal scales adapt by Robbins-Monro steps on batch acceptance rates
//! during burn-in and are frozen afterwards.

mod diagnostics;
mod io;

pub use diagnostics::{effective_sample_size, ess_chains, gelman_rubin, split_rhat, Diagnostics};
pub use io::{read_draws, write_draws};

use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::derive_seed;

pub type ChainRng = ChaCha8Rng;

/// Stage tag for per-chain seeds.
pub const STAGE_CHAIN: u64 = 0x4d43_4d43;

const SCALE_FLOOR: f64 = 1e-10;

/// Map from the unconstrained sampling scale to a parameter's support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// (0, inf)
    Log,
    /// (-1, 1)
    LogitSymmetric,
    /// (0, 1)
    LogitUnit,
    /// (lo, hi)
    Bounded { lo: f64, hi: f64 },
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// log(sigmoid(u) * (1 - sigmoid(u))), stable for large |u|.
fn log_sigmoid_deriv(u: f64) -> f64 {
    -u.abs() - 2.0 * (-u.abs()).exp().ln_1p()
}

impl Transform {
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::LogitSymmetric => 2.0 * sigmoid(u) - 1.0,
            Transform::LogitUnit => sigmoid(u),
            Transform::Bounded { lo, hi } => lo + (hi - lo) * sigmoid(u),
        }
    }

    pub fn unconstrain(self, x: f64) -> f64 {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::LogitSymmetric => logit((x + 1.0) / 2.0),
            Transform::LogitUnit => logit(x),
            Transform::Bounded { lo, hi } => logit((x - lo) / (hi - lo)),
        }
    }

    /// log |dx/du|
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => u,
            Transform::LogitSymmetric => std::f64::consts::LN_2 + log_sigmoid_deriv(u),
            Transform::LogitUnit => log_sigmoid_deriv(u),
            Transform::Bounded { lo, hi } => (hi - lo).ln() + log_sigmoid_deriv(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Metropolis,
    /// Exact conditional draw supplied by the target.
    Gibbs { kept_only: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    /// Names of the scalar coordinates, e.g. `delta[UP]`.
    pub coords: Vec<String>,
    pub transform: Transform,
    pub kind: BlockKind,
    /// Initial per-coordinate proposal standard deviations (unconstrained scale).
    pub proposal_scales: Vec<f64>,
}

impl ParameterBlock {
    pub fn scalar(name: &str, transform: Transform, scale: f64) -> Self {
        ParameterBlock {
            name: name.to_string(),
            coords: vec![name.to_string()],
            transform,
            kind: BlockKind::Metropolis,
            proposal_scales: vec![scale],
        }
    }

    pub fn vector(name: &str, coords: Vec<String>, transform: Transform, scale: f64) -> Self {
        let n = coords.len();
        ParameterBlock {
            name: name.to_string(),
            coords,
            transform,
            kind: BlockKind::Metropolis,
            proposal_scales: vec![scale; n],
        }
    }

    pub fn gibbs(name: &str, coords: Vec<String>, kept_only: bool) -> Self {
        let n = coords.len();
        ParameterBlock {
            name: name.to_string(),
            coords,
            transform: Transform::Identity,
            kind: BlockKind::Gibbs { kept_only },
            proposal_scales: vec![1.0; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }
}

/// A posterior to sample. Parameters live in one flat vector on the
/// constrained scale, laid out block after block as returned by `blocks`.
pub trait Target: Sync {
    fn blocks(&self) -> Vec<ParameterBlock>;

    /// Starting point for one chain (constrained scale).
    fn initial(&self, rng: &mut ChainRng) -> Vec<f64>;

    /// Log posterior up to an additive constant.
    fn log_density(&self, params: &[f64]) -> f64;

    /// Log of the full conditional of `block` up to a constant. Defaults to
    /// the whole log posterior; models override it to skip unrelated terms.
    fn block_log_density(&self, _block: usize, params: &[f64]) -> f64 {
        self.log_density(params)
    }

    /// Update of a Gibbs block leaving the target invariant, usually an
    /// exact draw from its full conditional.
    fn gibbs(&self, block: usize, _params: &mut [f64], _rng: &mut ChainRng) {
        panic!("block {block} declared Gibbs but the target has no sampler for it");
    }
}

/// Wraps a plain log-density closure as a single-block-per-entry target.
pub struct FnTarget<F> {
    pub blocks: Vec<ParameterBlock>,
    pub init: Vec<f64>,
    pub logpost: F,
    /// Random-walk jitter added to `init` per chain (constrained scale).
    pub init_jitter: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    fn blocks(&self) -> Vec<ParameterBlock> {
        self.blocks.clone()
    }

    fn initial(&self, rng: &mut ChainRng) -> Vec<f64> {
        self.init
            .iter()
            .map(|x| x + self.init_jitter * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn log_density(&self, params: &[f64]) -> f64 {
        (self.logpost)(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub target_accept_scalar: f64,
    pub target_accept_vector: f64,
}

impl Default for McmcConfig {
    /// 8 chains x (12,000 - 2,000) / 10 = 8,000 kept draws.
    fn default() -> Self {
        McmcConfig {
            chains: 8,
            iterations: 12_000,
            burn_in: 2_000,
            thin: 10,
            seed: 1,
            adapt_window: 50,
            target_accept_scalar: 0.44,
            target_accept_vector: 0.234,
        }
    }
}

impl McmcConfig {
    pub fn kept_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below total iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::Config("thin and adapt_window must be positive".into()));
        }
        if self.kept_per_chain() == 0 {
            return Err(Error::Config("configuration keeps no draws".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub chains: usize,
    pub kept: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub model: String,
    pub model_hash: String,
    /// Post-burn-in acceptance rate per Metropolis block, averaged over chains.
    pub acceptance: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    /// Index of the covariate draw each chain conditioned on, if any.
    #[serde(default)]
    pub covariate_draws: Vec<usize>,
}

/// Kept draws, `values[param][chain][iteration]`, constrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Vec<Vec<f64>>>,
    pub meta: DrawsMeta,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, values: Vec<Vec<Vec<f64>>>, meta: DrawsMeta) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        PosteriorDraws {
            names,
            index,
            values,
            meta,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn kept(&self) -> usize {
        self.values
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.chains() * self.kept()
    }

    /// Per-chain draws of one scalar parameter.
    pub fn get(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.index.get(name).map(|&i| self.values[i].as_slice())
    }

    pub fn get_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_index(&self, i: usize) -> &[Vec<f64>] {
        &self.values[i]
    }

    /// All draws of a parameter, chains concatenated in index order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.get(name).map(|chains| chains.concat())
    }

    /// Value of `name` at pooled draw `g` (chain-major order).
    pub fn value(&self, name: &str, g: usize) -> Option<f64> {
        let i = *self.index.get(name)?;
        let kept = self.kept();
        Some(self.values[i][g / kept][g % kept])
    }
}

struct BlockState {
    range: Range<usize>,
    log_scale: f64,
    coord_scales: Vec<f64>,
    window_accepts: usize,
    window_tries: usize,
    windows: usize,
    zero_windows: usize,
    kept_accepts: usize,
    kept_tries: usize,
    // Welford moments of the unconstrained coordinates during burn-in.
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

/// Log acceptance ratio of moving `block` from its current value in
/// `params` to the unconstrained point `proposal` (symmetric proposal).
/// `params` is left unchanged.
pub fn log_acceptance_ratio<T: Target + ?Sized>(
    target: &T,
    block_index: usize,
    block: &ParameterBlock,
    range: Range<usize>,
    params: &mut [f64],
    proposal: &[f64],
) -> f64 {
    let tr = block.transform;
    let saved: Vec<f64> = params[range.clone()].to_vec();
    let cur_jac: f64 = saved.iter().map(|&x| tr.log_jacobian(tr.unconstrain(x))).sum();
    let lp_cur = target.block_log_density(block_index, params) + cur_jac;
    for (slot, &u) in params[range.clone()].iter_mut().zip(proposal) {
        *slot = tr.constrain(u);
    }
    let new_jac: f64 = proposal.iter().map(|&u| tr.log_jacobian(u)).sum();
    let lp_new = target.block_log_density(block_index, params) + new_jac;
    params[range].copy_from_slice(&saved);
    if lp_new.is_nan() {
        return f64::NEG_INFINITY;
    }
    lp_new - lp_cur
}

struct ChainOutput {
    draws: Vec<Vec<f64>>, // [param][iteration]
    acceptance: Vec<Option<f64>>,
    warnings: Vec<String>,
}

fn run_chain<T: Target + ?Sized>(
    target: &T,
    blocks: &[ParameterBlock],
    cfg: &McmcConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = ChainRng::seed_from_u64(derive_seed(cfg.seed, STAGE_CHAIN, chain as u64));
    let mut params = target.initial(&mut rng);
    let dim: usize = blocks.iter().map(ParameterBlock::dimension).sum();
    if params.len() != dim {
        return Err(Error::Domain(format!(
            "initial point has {} values, blocks declare {dim}",
            params.len()
        )));
    }
    let lp0 = target.log_density(&params);
    if !lp0.is_finite() {
        let mut detail = String::new();
        let mut off = 0;
        for b in blocks {
            let vals = &params[off..off + b.dimension()];
            let shown: Vec<String> = vals.iter().take(8).map(|v| format!("{v:.6}")).collect();
            detail.push_str(&format!("{}=[{}] ", b.name, shown.join(",")));
            off += b.dimension();
        }
        return Err(Error::NonFiniteInit {
            chain,
            detail: format!("log posterior {lp0}; {detail}"),
        });
    }

    let mut states = Vec::with_capacity(blocks.len());
    let mut off = 0;
    for b in blocks {
        let d = b.dimension();
        states.push(BlockState {
            range: off..off + d,
            log_scale: 0.0,
            coord_scales: b.proposal_scales.clone(),
            window_accepts: 0,
            window_tries: 0,
            windows: 0,
            zero_windows: 0,
            kept_accepts: 0,
            kept_tries: 0,
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        });
        off += d;
    }

    let kept = cfg.kept_per_chain();
    let mut draws = vec![Vec::with_capacity(kept); dim];
    let mut proposal = Vec::new();
    for it in 0..cfg.iterations {
        let burning = it < cfg.burn_in;
        let record = !burning && (it - cfg.burn_in + 1).is_multiple_of(cfg.thin);
        for (bi, (block, st)) in blocks.iter().zip(states.iter_mut()).enumerate() {
            match block.kind {
                BlockKind::Gibbs { kept_only } => {
                    if !kept_only || record {
                        target.gibbs(bi, &mut params, &mut rng);
                    }
                }
                BlockKind::Metropolis => {
                    let tr = block.transform;
                    let scale = st.log_scale.exp();
                    proposal.clear();
                    for (k, &x) in params[st.range.clone()].iter().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        proposal.push(tr.unconstrain(x) + scale * st.coord_scales[k] * z);
                    }
                    let ratio =
                        log_acceptance_ratio(target, bi, block, st.range.clone(), &mut params, &proposal);
                    let u: f64 = rng.random();
                    let accept = u.ln() < ratio;
                    if accept {
                        for (slot, &p) in params[st.range.clone()].iter_mut().zip(&proposal) {
                            *slot = tr.constrain(p);
                        }
                    }
                    if burning {
                        st.window_tries += 1;
                        st.window_accepts += accept as usize;
                        st.n += 1;
                        for (k, &x) in params[st.range.clone()].iter().enumerate() {
                            let v = tr.unconstrain(x);
                            let delta = v - st.mean[k];
                            st.mean[k] += delta / st.n as f64;
                            st.m2[k] += delta * (v - st.mean[k]);
                        }
                    } else {
                        st.kept_tries += 1;
                        st.kept_accepts += accept as usize;
                    }
                }
            }
        }
        if burning && (it + 1) % cfg.adapt_window == 0 {
            for (block, st) in blocks.iter().zip(states.iter_mut()) {
                if block.kind != BlockKind::Metropolis || st.window_tries == 0 {
                    continue;
                }
                adapt(block, st, cfg);
            }
        }
        if record {
            for (d, &v) in draws.iter_mut().zip(&params) {
                d.push(v);
            }
        }
    }

    let mut warnings = Vec::new();
    let acceptance = blocks
        .iter()
        .zip(&states)
        .map(|(b, st)| {
            if st.zero_windows > 0 {
                warnings.push(format!(
                    "chain {chain}: block {} rejected every proposal in {} adaptation window(s); scale floor {SCALE_FLOOR:e} enforced",
                    b.name, st.zero_windows
                ));
            }
            (b.kind == BlockKind::Metropolis && st.kept_tries > 0)
                .then(|| st.kept_accepts as f64 / st.kept_tries as f64)
        })
        .collect();
    Ok(ChainOutput {
        draws,
        acceptance,
        warnings,
    })
}

fn adapt(block: &ParameterBlock, st: &mut BlockState, cfg: &McmcConfig) {
    let d = block.dimension();
    let target = if d == 1 {
        cfg.target_accept_scalar
    } else {
        cfg.target_accept_vector
    };
    st.windows += 1;
    let rate = st.window_accepts as f64 / st.window_tries as f64;
    if st.window_accepts == 0 {
        st.zero_windows += 1;
    }
    let gain = (3.0 / (st.windows as f64).sqrt()).min(1.5);
    st.log_scale += gain * (rate - target);
    // Vector blocks learn per-coordinate scales from the burn-in spread.
    if d > 1 && st.n >= 20 * d.max(10) && st.windows.is_multiple_of(4) {
        let mut changed = false;
        for k in 0..d {
            let sd = (st.m2[k] / (st.n - 1) as f64).sqrt();
            if sd.is_finite() && sd > 0.0 {
                let new = sd * 2.38 / (d as f64).sqrt();
                changed |= (new / st.coord_scales[k]).ln().abs() > 0.05;
                st.coord_scales[k] = new;
            }
        }
        if changed {
            st.log_scale = 0.0;
        }
    }
    let min_coord = st.coord_scales.iter().copied().fold(f64::INFINITY, f64::min);
    if st.log_scale.exp() * min_coord < SCALE_FLOOR {
        st.log_scale = (SCALE_FLOOR / min_coord).ln();
    }
    st.window_accepts = 0;
    st.window_tries = 0;
}

/// Runs `cfg.chains` independent chains. Chain `k` is seeded from
/// `(cfg.seed, k)` only, so results do not depend on thread scheduling.
pub fn run_chains<T: Target + ?Sized>(target: &T, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    run_chains_with(|_| target, cfg)
}

/// Like [`run_chains`] but with a chain-specific target (e.g. each chain
/// conditioning on a different covariate draw).
pub fn run_chains_with<'a, T, F>(make: F, cfg: &McmcConfig) -> Result<PosteriorDraws>
where
    T: Target + ?Sized + 'a,
    F: Fn(usize) -> &'a T + Sync,
{
    cfg.validate()?;
    let blocks = make(0).blocks();
    let outputs: Vec<Result<ChainOutput>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(make(c), &blocks, cfg, c))
        .collect();
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;

    let names: Vec<String> = blocks.iter().flat_map(|b| b.coords.iter().cloned()).collect();
    let mut values = vec![Vec::with_capacity(cfg.chains); names.len()];
    let mut warnings = Vec::new();
    let mut acc_sum = vec![0.0; blocks.len()];
    for out in outputs {
        for (p, d) in out.draws.into_iter().enumerate() {
            values[p].push(d);
        }
        for (s, a) in acc_sum.iter_mut().zip(&out.acceptance) {
            *s += a.unwrap_or(0.0);
        }
        warnings.extend(out.warnings);
    }
    let acceptance = blocks
        .iter()
        .zip(acc_sum)
        .filter(|(b, _)| b.kind == BlockKind::Metropolis)
        .map(|(b, s)| (b.name.clone(), s / cfg.chains as f64))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PosteriorDraws::new(
        names,
        values,
        DrawsMeta {
            chains: cfg.chains,
            kept: cfg.kept_per_chain(),
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            seed: cfg.seed,
            model: String::new(),
            model_hash: String::new(),
            acceptance,
            warnings,
            covariate_draws: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    fn std_normal_target() -> FnTarget<impl Fn(&[f64]) -> f64 + Sync> {
        FnTarget {
            blocks: vec![ParameterBlock::scalar("x", Transform::Identity, 1.0)],
            init: vec![0.0],
            logpost: |p: &[f64]| -0.5 * p[0] * p[0],
            init_jitter: 1.0,
        }
    }

    #[test]
    fn transforms_round_trip_and_jacobians() {
        let cases = [
            (Transform::Identity, -3.2),
            (Transform::Log, 0.7),
            (Transform::LogitSymmetric, -0.95),
            (Transform::LogitUnit, 0.2),
            (Transform::Bounded { lo: 0.05, hi: 2.0 }, 1.3),
        ];
        for (tr, x) in cases {
            let u = tr.unconstrain(x);
            assert!((tr.constrain(u) - x).abs() < 1e-12, "{tr:?}");
            let h = 1e-6;
            let fd = (tr.constrain(u + h) - tr.constrain(u - h)) / (2.0 * h);
            assert!((tr.log_jacobian(u) - fd.ln()).abs() < 1e-6, "{tr:?}");
        }
        assert!(Transform::LogitSymmetric.log_jacobian(800.0).is_finite());
    }

    #[test]
    fn repeated_state_has_unit_ratio() {
        let t = FnTarget {
            blocks: vec![ParameterBlock::scalar("r", Transform::LogitSymmetric, 1.0)],
            init: vec![0.3],
            logpost: |p: &[f64]| -(p[0] - 0.1).powi(2),
            init_jitter: 0.0,
        };
        let blocks = t.blocks();
        let mut params = vec![0.3];
        let u = Transform::LogitSymmetric.unconstrain(0.3);
        let r = log_acceptance_ratio(&t, 0, &blocks[0], 0..1, &mut params, &[u]);
        assert_eq!(r, 0.0);
        assert_eq!(params, [0.3]);
    }

    #[test]
    fn standard_normal_moments() {
        let cfg = McmcConfig {
            chains: 4,
            iterations: 22_000,
            burn_in: 2_000,
            thin: 1,
            seed: 11,
            ..McmcConfig::default()
        };
        let d = run_chains(&std_normal_target(), &cfg).unwrap();
        let x = d.pooled("x").unwrap();
        assert_eq!(x.len(), 80_000);
        assert!(mean(&x).abs() < 0.03, "{}", mean(&x));
        assert!((variance(&x) - 1.0).abs() < 0.05, "{}", variance(&x));
    }

    #[test]
    fn correlated_normal_vector_block() {
        let rho: f64 = 0.9;
        let det = 1.0 - rho * rho;
        let t = FnTarget {
            blocks: vec![ParameterBlock::vector(
                "xy",
                vec!["x".into(), "y".into()],
                Transform::Identity,
                0.5,
            )],
            init: vec![0.0, 0.0],
            logpost: move |p: &[f64]| {
                -0.5 * (p[0] * p[0] - 2.0 * rho * p[0] * p[1] + p[1] * p[1]) / det
            },
            init_jitter: 1.0,
        };
        let cfg = McmcConfig {
            chains: 4,
            iterations: 42_000,
            burn_in: 2_000,
            thin: 2,
            seed: 5,
            ..McmcConfig::default()
        };
        let d = run_chains(&t, &cfg).unwrap();
        let x = d.pooled("x").unwrap();
        let y = d.pooled("y").unwrap();
        let (mx, my) = (mean(&x), mean(&y));
        let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
        let corr = cov / (variance(&x) * variance(&y)).sqrt();
        assert!((corr - 0.9).abs() < 0.03, "{corr}");
    }

    #[test]
    fn same_seed_same_draws() {
        let cfg = McmcConfig {
            chains: 2,
            iterations: 600,
            burn_in: 100,
            thin: 5,
            seed: 42,
            ..McmcConfig::default()
        };
        let a = run_chains(&std_normal_target(), &cfg).unwrap();
        let b = run_chains(&std_normal_target(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_chains(&std_normal_target(), &McmcConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.get("x"), c.get("x"));
    }

    #[test]
    fn kept_count_and_layout() {
        let cfg = McmcConfig {
            chains: 3,
            iterations: 1_000,
            burn_in: 200,
            thin: 10,
            seed: 1,
            ..McmcConfig::default()
        };
        let d = run_chains(&std_normal_target(), &cfg).unwrap();
        assert_eq!(d.chains(), 3);
        assert_eq!(d.kept(), 80);
        assert_eq!(d.meta.kept, 80);
        assert_eq!(d.value("x", 80), Some(d.get("x").unwrap()[1][0]));
    }

    #[test]
    fn non_finite_start_is_reported() {
        let t = FnTarget {
            blocks: vec![ParameterBlock::scalar("x", Transform::Identity, 1.0)],
            init: vec![-1.0],
            logpost: |p: &[f64]| if p[0] < 0.0 { f64::NEG_INFINITY } else { 0.0 },
            init_jitter: 0.0,
        };
        let cfg = McmcConfig {
            chains: 2,
            iterations: 10,
            burn_in: 5,
            thin: 1,
            ..McmcConfig::default()
        };
        match run_chains(&t, &cfg) {
            Err(Error::NonFiniteInit { chain, detail }) => {
                assert_eq!(chain, 0);
                assert!(detail.contains("x=[-1.000000]"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = McmcConfig {
            iterations: 100,
            burn_in: 100,
            ..McmcConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn all_rejected_windows_warn() {
        // Point mass: every move away from 0 is rejected.
        let t = FnTarget {
            blocks: vec![ParameterBlock::scalar("x", Transform::Identity, 1.0)],
            init: vec![0.0],
            logpost: |p: &[f64]| if p[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY },
            init_jitter: 0.0,
        };
        let cfg = McmcConfig {
            chains: 2,
            iterations: 3_000,
            burn_in: 2_500,
            thin: 1,
            ..McmcConfig::default()
        };
        let d = run_chains(&t, &cfg).unwrap();
        assert!(!d.meta.warnings.is_empty());
        assert!(d.meta.warnings[0].contains("scale floor"));
    }
}
