use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::stats::{mean, variance};

/// Per-parameter convergence summaries plus any degeneracy warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub values: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Largest finite value, ignoring parameters flagged degenerate.
    pub fn max_finite(&self) -> f64 {
        self.values
            .values()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n..2 * n]])
        .collect()
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split_halves(chains);
    let n = parts.first().map_or(0, |p| p.len());
    if parts.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| variance(p)).sum::<f64>() / parts.len() as f64;
    if !(w > 0.0) {
        return f64::NAN;
    }
    let nf = n as f64;
    let b_over_n = variance(&means);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Gelman-Rubin split R-hat for every scalar parameter. Parameters with zero
/// within-chain variance get NaN and a warning.
pub fn gelman_rubin(draws: &PosteriorDraws) -> Diagnostics {
    let mut out = Diagnostics::default();
    if draws.chains() < 2 || draws.kept() < 10 {
        out.warnings.push(format!(
            "R-hat needs >= 2 chains and >= 10 kept draws (have {} x {})",
            draws.chains(),
            draws.kept()
        ));
    }
    for (i, name) in draws.names().iter().enumerate() {
        let r = split_rhat(draws.by_index(i));
        if r.is_nan() {
            out.warnings.push(format!("{name}: zero within-chain variance, R-hat undefined"));
        }
        out.values.insert(name.clone(), r);
    }
    out
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone
/// positive-sequence truncation. Clipped to `[0, total draws]`.
pub fn ess_chains(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return 0.0;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return 0.0;
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    // Sum of consecutive pairs, truncated at the first negative pair and
    // forced monotone.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10().max(1.0));
    (total / tau).clamp(0.0, total)
}

pub fn effective_sample_size(draws: &PosteriorDraws) -> Diagnostics {
    let mut out = Diagnostics::default();
    for (i, name) in draws.names().iter().enumerate() {
        let chains = draws.by_index(i);
        let constant = chains
            .iter()
            .flatten()
            .all(|&v| v == chains[0].first().copied().unwrap_or(v));
        let ess = if constant {
            out.warnings.push(format!("{name}: constant draws, ESS set to 0"));
            0.0
        } else {
            ess_chains(chains)
        };
        out.values.insert(name.clone(), ess);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::DrawsMeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn draws_of(chains: Vec<Vec<f64>>) -> PosteriorDraws {
        PosteriorDraws::new(vec!["x".into()], vec![chains], DrawsMeta::default())
    }

    fn normal_chain(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
        (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn rhat_near_one_for_iid_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = draws_of((0..4).map(|_| normal_chain(&mut rng, 2000, 0.0)).collect());
        let r = gelman_rubin(&d).get("x").unwrap();
        assert!((0.99..=1.05).contains(&r), "{r}");
    }

    #[test]
    fn rhat_large_for_separated_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = draws_of(vec![normal_chain(&mut rng, 1000, 0.0), normal_chain(&mut rng, 1000, 10.0)]);
        assert!(gelman_rubin(&d).get("x").unwrap() > 1.2 * 2.0);
    }

    #[test]
    fn rhat_constant_is_flagged() {
        let d = draws_of(vec![vec![1.0; 50], vec![1.0; 50]]);
        let g = gelman_rubin(&d);
        assert!(g.get("x").unwrap().is_nan());
        assert_eq!(g.warnings.len(), 1);
        let e = effective_sample_size(&d);
        assert_eq!(e.get("x"), Some(0.0));
        assert_eq!(e.warnings.len(), 1);
    }

    #[test]
    fn ess_iid_close_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = draws_of((0..4).map(|_| normal_chain(&mut rng, 2500, 0.0)).collect());
        let e = effective_sample_size(&d).get("x").unwrap();
        assert!((0.8 * 10_000.0..=10_000.0).contains(&e), "{e}");
    }

    #[test]
    fn ess_ar1_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho: f64 = 0.9;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
                (0..5000)
                    .map(|_| {
                        x = rho * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let e = ess_chains(&chains);
        let expected = 20_000.0 * (1.0 - rho) / (1.0 + rho);
        assert!(e > expected / 1.5 && e < expected * 1.5, "{e} vs {expected}");
    }
}
