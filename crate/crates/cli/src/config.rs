use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srb_core::ingest::{DataPaths, DataOptions, DEFAULT_BASELINE};
use srb_core::mcmc::McmcConfig;
use srb_core::trajectory::DEFAULT_QUANTILES;
use srb_core::validation::{DEFAULT_CUTOFF, DEFAULT_SETS};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    /// 8 chains x 12,000 iterations.
    #[default]
    Full,
    /// 4 chains x 6,000 iterations.
    Reduced,
}

impl Budget {
    pub fn mcmc(self) -> McmcConfig {
        match self {
            Budget::Full => McmcConfig::default(),
            Budget::Reduced => McmcConfig {
                chains: 4,
                iterations: 6_000,
                ..McmcConfig::default()
            },
        }
    }
}

/// Partial MCMC settings; unset fields come from the budget profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcOverrides {
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
}

impl McmcOverrides {
    fn apply(&self, cfg: &mut McmcConfig) {
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.thin {
            cfg.thin = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    /// Whether `run-all` includes the holdout refit.
    pub enabled: bool,
    pub sets: usize,
    pub budget: Budget,
    pub mcmc: McmcOverrides,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            enabled: false,
            sets: DEFAULT_SETS,
            budget: Budget::Reduced,
            mcmc: McmcOverrides::default(),
        }
    }
}

/// Run configuration. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Directory holding `srb_estimates.csv`, `tfr.csv`, `births.csv` and
    /// `dsrb_obs.csv`.
    pub data_dir: PathBuf,
    /// Woman-level survey records; when set, `run-all` rebuilds
    /// `dsrb_obs.csv` from them first.
    pub women: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub baseline: f64,
    pub quantiles: Vec<f64>,
    pub cutoff: i32,
    pub budget: Budget,
    pub dsrb: McmcOverrides,
    pub srb: McmcOverrides,
    /// RW2 / alpha PC-prior scale; derived from the data when absent.
    pub nu: Option<f64>,
    pub validation: ValidationSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data_dir: PathBuf::from("data"),
            women: None,
            out_dir: PathBuf::from("out"),
            seed: None,
            baseline: DEFAULT_BASELINE,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            cutoff: DEFAULT_CUTOFF,
            budget: Budget::Full,
            dsrb: McmcOverrides::default(),
            srb: McmcOverrides::default(),
            nu: None,
            validation: ValidationSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub mcmc: McmcOverrides,
    pub out_dir: Option<PathBuf>,
    pub cutoff: Option<i32>,
    pub quantiles: Option<Vec<f64>>,
}

impl FitConfig {
    pub fn load(path: Option<&Path>, flags: &FlagOverrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let mut cfg: FitConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new("."));
                cfg.data_dir = base.join(&cfg.data_dir);
                cfg.out_dir = base.join(&cfg.out_dir);
                cfg.women = cfg.women.map(|w| base.join(w));
                cfg
            }
            None => FitConfig::default(),
        };
        if flags.seed.is_some() {
            cfg.seed = flags.seed;
        }
        for m in [&mut cfg.dsrb, &mut cfg.srb, &mut cfg.validation.mcmc] {
            let flag = &flags.mcmc;
            m.chains = flag.chains.or(m.chains);
            m.iterations = flag.iterations.or(m.iterations);
            m.burn_in = flag.burn_in.or(m.burn_in);
            m.thin = flag.thin.or(m.thin);
        }
        if let Some(d) = &flags.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(c) = flags.cutoff {
            cfg.cutoff = c;
        }
        if let Some(q) = &flags.quantiles {
            cfg.quantiles = q.clone();
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.quantiles.is_empty() || self.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(CliError::Config("quantiles must be a non-empty list in [0, 1]".into()));
        }
        if !(self.baseline > 0.0) {
            return Err(CliError::Config("baseline must be positive".into()));
        }
        for m in [self.dsrb_mcmc(0), self.srb_mcmc(0), self.validation_mcmc(0)] {
            m.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// The seed; sampling commands fail without one.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    fn mcmc(&self, budget: Budget, o: &McmcOverrides, seed: u64) -> McmcConfig {
        let mut cfg = budget.mcmc();
        o.apply(&mut cfg);
        cfg.seed = seed;
        cfg
    }

    pub fn dsrb_mcmc(&self, seed: u64) -> McmcConfig {
        self.mcmc(self.budget, &self.dsrb, seed)
    }

    pub fn srb_mcmc(&self, seed: u64) -> McmcConfig {
        self.mcmc(self.budget, &self.srb, seed)
    }

    pub fn validation_mcmc(&self, seed: u64) -> McmcConfig {
        self.mcmc(self.validation.budget, &self.validation.mcmc, seed)
    }

    pub fn data_paths(&self) -> DataPaths {
        DataPaths::in_dir(&self.data_dir)
    }

    pub fn data_options(&self) -> DataOptions {
        DataOptions {
            baseline: self.baseline,
            ..DataOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_budget() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 3, "budget": "reduced", "srb": {"iterations": 900, "burn_in": 100}}"#).unwrap();
        let flags = FlagOverrides {
            seed: Some(9),
            mcmc: McmcOverrides {
                thin: Some(2),
                ..Default::default()
            },
            ..Default::default()
        };
        let cfg = FitConfig::load(Some(&path), &flags).unwrap();
        assert_eq!(cfg.require_seed().unwrap(), 9);
        let srb = cfg.srb_mcmc(9);
        assert_eq!((srb.chains, srb.iterations, srb.burn_in, srb.thin), (4, 900, 100, 2));
        assert_eq!(cfg.dsrb_mcmc(9).iterations, 6_000);
        assert_eq!(cfg.data_dir, dir.path().join("data"));
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sed": 3}"#).unwrap();
        assert!(matches!(FitConfig::load(Some(&path), &FlagOverrides::default()), Err(CliError::Config(_))));
        std::fs::write(&path, r#"{"dsrb": {"iterations": 10, "burn_in": 20}}"#).unwrap();
        assert!(matches!(FitConfig::load(Some(&path), &FlagOverrides::default()), Err(CliError::Config(_))));
        let cfg = FitConfig::load(None, &FlagOverrides::default()).unwrap();
        assert!(cfg.require_seed().is_err());
    }
}
