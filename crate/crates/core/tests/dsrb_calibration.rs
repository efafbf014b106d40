use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srb_core::dsrb::{fit_dsrb_obs, sample_prior, simulate_observations, DsrbModel};
use srb_core::ingest::StateIndex;
use srb_core::mcmc::McmcConfig;
use srb_core::stats::derive_seed;

const SURVEY_YEARS: [i32; 4] = [1992, 1998, 2005, 2015];

fn reps() -> usize {
    std::env::var("DSRB_SBC_REPS").ok().and_then(|s| s.parse().ok()).unwrap_or(6)
}

/// Small-scale calibration: truths drawn from the prior, refit, check 95%
/// interval coverage of the state-level parameters.
#[test]
fn intervals_cover_prior_truths() {
    let states = StateIndex::new((0..10).map(|i| format!("S{i}")).collect()).unwrap();
    let cfg = McmcConfig {
        chains: 4,
        iterations: 6000,
        burn_in: 2000,
        thin: 10,
        ..McmcConfig::default()
    };
    let (mut covered, mut total) = (0usize, 0usize);
    let mut ranks = Vec::new();
    for r in 0..reps() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(77, 1, r as u64));
        let truth = sample_prior(10, &mut rng);
        let obs = simulate_observations(&truth, &states, &SURVEY_YEARS, 0.005, &mut rng);
        let fit = fit_dsrb_obs(&states, &obs, &McmcConfig { seed: r as u64 + 1, ..cfg.clone() }).unwrap();
        let names = DsrbModel::new(&states, &obs).unwrap().param_names();
        let flat = truth.to_flat();
        for (name, &t) in names.iter().zip(&flat).take(30) {
            let mut d = fit.draws.pooled(name).unwrap();
            d.sort_by(f64::total_cmp);
            let lo = srb_core::stats::quantile_sorted(&d, 0.025);
            let hi = srb_core::stats::quantile_sorted(&d, 0.975);
            covered += (lo <= t && t <= hi) as usize;
            total += 1;
            ranks.push(d.iter().step_by(8).filter(|&&x| x < t).count());
        }
        eprintln!("rep {r}: rhat max {:.3}", fit.rhat.max_finite());
    }
    let rate = covered as f64 / total as f64;
    let mut bins = [0usize; 10];
    for r in &ranks {
        bins[(r * 10 / 201).min(9)] += 1;
    }
    eprintln!("coverage {rate:.3}, rank bins {bins:?}");
    assert!(rate >= 0.85, "coverage {rate}");
}
