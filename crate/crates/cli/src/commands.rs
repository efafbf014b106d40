//! One function per subcommand; `run_all` chains them. Every stage reads
//! and writes fixed file names inside the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use srb_core::derived::{self, TablePeriods};
use srb_core::dsrb::{fit_dsrb, project_dsrb};
use srb_core::ingest::{load_dataset, validate_dataset, Dataset, YearRange};
use srb_core::jackknife::{default_fieldwork, estimate_all, load_women, write_dsrb_obs};
use srb_core::mcmc::{effective_sample_size, gelman_rubin, read_draws, write_draws, Diagnostics, PosteriorDraws};
use srb_core::srb::{dsrb_effect_summary, fit_srb_model, project_srb, tfr_effect_summary, SrbModel, SrbOptions};
use srb_core::synth::{self, SynthConfig};
use srb_core::trajectory::{write_summary, Trajectories};
use srb_core::validation::{self, ValidationConfig};
use srb_core::Error;

use crate::config::FitConfig;
use crate::error::CliError;
use crate::manifest::Manifest;

pub const DSRB_DRAWS: &str = "dsrb_draws";
pub const SRB_DRAWS: &str = "srb_draws";
pub const DSRB_TRAJECTORIES: &str = "dsrb_trajectories.csv";
pub const SRB_TRAJECTORIES: &str = "srb_trajectories.csv";
pub const AMFB_TRAJECTORIES: &str = "amfb_trajectories.csv";
pub const MISSING_BIRTHS: &str = "missing_births_summary.csv";
pub const CLASSIFICATION: &str = "classification.csv";
pub const VALIDATION_DIR: &str = "validation";
pub const PLOT_DIR: &str = "plot_data";

/// Shared state of one invocation.
pub struct Context {
    pub cfg: FitConfig,
    pub manifest: Manifest,
    /// Fits that missed the R-hat threshold, with their worst value.
    pub unconverged: Vec<(String, f64)>,
}

impl Context {
    pub fn new(command: &str, cfg: FitConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        let manifest = Manifest::new(command, &cfg);
        Ok(Context {
            cfg,
            manifest,
            unconverged: Vec::new(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn produced(&mut self, name: &str) -> Result<(), CliError> {
        let root = self.cfg.out_dir.clone();
        self.manifest.output(&root, &root.join(name))
    }

    fn used(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            self.manifest.input(&path.join("meta.json"))
        } else {
            self.manifest.input(path)
        }
    }

    fn dataset(&mut self) -> Result<Dataset, CliError> {
        let paths = self.cfg.data_paths();
        let d = load_dataset(&paths, &self.cfg.data_options())?;
        for p in [&paths.srb_estimates, &paths.tfr, &paths.births, &paths.dsrb_obs] {
            self.manifest.input(p)?;
        }
        let report = validate_dataset(&d);
        if !report.is_empty() {
            return Err(Error::InvalidData(serde_json::to_string(&report).map_err(Error::from)?).into());
        }
        Ok(d)
    }

    fn trajectories(&mut self, name: &str, value: &str) -> Result<Trajectories, CliError> {
        let path = self.out(name);
        let t = Trajectories::read_csv(&path, value)?;
        self.used(&path)?;
        Ok(t)
    }

    fn draws(&mut self, name: &str) -> Result<PosteriorDraws, CliError> {
        let path = self.out(name);
        let d = read_draws(&path)?;
        self.used(&path)?;
        Ok(d)
    }

    fn srb_model(&self, d: &Dataset) -> Result<SrbModel, CliError> {
        Ok(SrbModel::new(d, &SrbOptions { nu: self.cfg.nu })?)
    }

    fn summary(&mut self, t: &Trajectories, name: &str) -> Result<(), CliError> {
        let path = self.out(name);
        write_summary(&t.summarize(&self.cfg.quantiles), &["state", "year"], &self.cfg.quantiles, &path)?;
        self.produced(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.out(name);
        let json = serde_json::to_string_pretty(value).map_err(Error::from)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        self.produced(name)
    }

    fn check_convergence(&mut self, model: &str, rhat: &Diagnostics, converged: bool) {
        if !converged {
            log::warn!("{model}: max split R-hat {:.3}", rhat.max_finite());
            self.unconverged.push((model.to_string(), rhat.max_finite()));
        }
    }

    /// Writes the manifest; reports the first unconverged fit as an error.
    pub fn finish(self) -> Result<(), CliError> {
        let name = format!("manifest-{}.json", self.manifest.command);
        self.manifest.write(&self.cfg.out_dir, &name)?;
        match self.unconverged.into_iter().next() {
            Some((model, max_rhat)) => Err(CliError::Convergence { model, max_rhat }),
            None => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: &'a str,
    converged: bool,
    max_rhat: f64,
    chains: usize,
    kept_per_chain: usize,
    warnings: &'a [String],
}

fn fit_report<'a>(model: &'a str, draws: &'a PosteriorDraws, rhat: &Diagnostics, converged: bool) -> FitReport<'a> {
    FitReport {
        model,
        converged,
        max_rhat: rhat.max_finite(),
        chains: draws.chains(),
        kept_per_chain: draws.kept(),
        warnings: &draws.meta.warnings,
    }
}

pub fn jackknife(ctx: &mut Context, input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let women = load_women(input)?;
    ctx.manifest.input(input)?;
    let out = estimate_all(&women, &default_fieldwork())?;
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| ctx.out("dsrb_obs.csv"));
    write_dsrb_obs(&out.observations, &path)?;
    let root = ctx.cfg.out_dir.clone();
    ctx.manifest.output(&root, &path)?;
    if !out.unusable.is_empty() {
        ctx.write_json("jackknife_unusable.json", &out.unusable)?;
    }
    Ok(())
}

pub fn fit_dsrb_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let seed = ctx.cfg.require_seed()?;
    let d = ctx.dataset()?;
    let fit = fit_dsrb(&d, &ctx.cfg.dsrb_mcmc(seed))?;
    write_draws(&fit.draws, &ctx.out(DSRB_DRAWS))?;
    ctx.produced(DSRB_DRAWS)?;
    ctx.write_json("dsrb_fit.json", &fit_report("dsrb", &fit.draws, &fit.rhat, fit.converged))?;
    ctx.check_convergence("dsrb", &fit.rhat, fit.converged);
    Ok(())
}

pub fn project_dsrb_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let draws = ctx.draws(DSRB_DRAWS)?;
    let d = ctx.dataset()?;
    let t = project_dsrb(&draws, d.states.codes(), YearRange::DSRB_MODEL)?;
    t.write_csv(&ctx.out(DSRB_TRAJECTORIES), "log_dsrb")?;
    ctx.produced(DSRB_TRAJECTORIES)?;
    ctx.summary(&t.map(f64::exp), "dsrb_summary.csv")
}

pub fn fit_srb_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let seed = ctx.cfg.require_seed()?;
    let d = ctx.dataset()?;
    let dsrb = ctx.trajectories(DSRB_TRAJECTORIES, "log_dsrb")?;
    let model = ctx.srb_model(&d)?;
    let fit = fit_srb_model(&model, &dsrb, &ctx.cfg.srb_mcmc(seed))?;
    write_draws(&fit.draws, &ctx.out(SRB_DRAWS))?;
    ctx.produced(SRB_DRAWS)?;
    ctx.write_json("srb_fit.json", &fit_report("srb", &fit.draws, &fit.rhat, fit.converged))?;
    ctx.check_convergence("srb", &fit.rhat, fit.converged);
    Ok(())
}

pub fn project_srb_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let d = ctx.dataset()?;
    let dsrb = ctx.trajectories(DSRB_TRAJECTORIES, "log_dsrb")?;
    let draws = ctx.draws(SRB_DRAWS)?;
    let model = ctx.srb_model(&d)?;
    let t = project_srb(&draws, &model, &dsrb, YearRange::SRB_MODEL.end)?;
    t.write_csv(&ctx.out(SRB_TRAJECTORIES), "srb")?;
    ctx.produced(SRB_TRAJECTORIES)?;
    ctx.summary(&t, "srb_summary.csv")
}

pub fn missing_births(ctx: &mut Context) -> Result<(), CliError> {
    let d = ctx.dataset()?;
    let srb = ctx.trajectories(SRB_TRAJECTORIES, "srb")?;
    let amfb = derived::amfb_trajectories(&srb, &d.births, d.states.codes(), d.baseline)?;
    amfb.write_csv(&ctx.out(AMFB_TRAJECTORIES), "amfb")?;
    ctx.produced(AMFB_TRAJECTORIES)?;
    ctx.summary(&amfb, "amfb_summary.csv")?;
    let periods = TablePeriods::default();
    let rows = derived::missing_births_table(&amfb, periods, &ctx.cfg.quantiles)?;
    derived::write_missing_births(&rows, &ctx.cfg.quantiles, periods, &ctx.out(MISSING_BIRTHS))?;
    ctx.produced(MISSING_BIRTHS)
}

pub fn classify(ctx: &mut Context) -> Result<(), CliError> {
    let amfb = ctx.trajectories(AMFB_TRAJECTORIES, "amfb")?;
    let rows = derived::classify_all(&amfb, YearRange::BIRTHS)?;
    derived::write_classification(&rows, &ctx.out(CLASSIFICATION))?;
    ctx.produced(CLASSIFICATION)?;
    let list = |flag: bool| {
        rows.iter()
            .filter(|r| r.imbalanced == flag)
            .map(|r| r.state.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    println!("With SRB imbalance: {}", list(true));
    println!("Without SRB imbalance: {}", list(false));
    Ok(())
}

pub fn validate(ctx: &mut Context) -> Result<(), CliError> {
    let seed = ctx.cfg.require_seed()?;
    let d = ctx.dataset()?;
    let full = ctx.trajectories(SRB_TRAJECTORIES, "srb")?;
    let vcfg = ValidationConfig {
        cutoff: ctx.cfg.cutoff,
        n_sets: ctx.cfg.validation.sets,
        mcmc: ctx.cfg.validation_mcmc(seed),
        srb: SrbOptions { nu: ctx.cfg.nu },
    };
    let run = validation::run_validation(&d, &full, &vcfg)?;
    let dir = ctx.out(VALIDATION_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    validation::write_report(&run.result, &dir)?;
    ctx.produced(VALIDATION_DIR)
}

/// Split R-hat, ESS and acceptance for every saved fit (or only `draws`).
pub fn diagnose(ctx: &mut Context, draws: Option<&Path>) -> Result<(), CliError> {
    let dirs: Vec<PathBuf> = match draws {
        Some(p) => vec![p.to_path_buf()],
        None => [DSRB_DRAWS, SRB_DRAWS].iter().map(|n| ctx.out(n)).filter(|p| p.is_dir()).collect(),
    };
    if dirs.is_empty() {
        return Err(Error::InvalidData("no posterior draws to diagnose".into()).into());
    }
    let path = ctx.out("diagnostics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["model", "parameter", "rhat", "ess", "acceptance"]).map_err(Error::from)?;
    for dir in dirs {
        let d = read_draws(&dir)?;
        ctx.used(&dir)?;
        let rhat = gelman_rubin(&d);
        let ess = effective_sample_size(&d);
        for name in d.names() {
            let acc = d
                .meta
                .acceptance
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, a)| a.to_string())
                .unwrap_or_default();
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            w.write_record([d.meta.model.clone(), name.clone(), fmt(rhat.get(name)), fmt(ess.get(name)), acc])
                .map_err(Error::from)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    ctx.produced("diagnostics.csv")
}

/// Tidy band tables behind the figures; each needs its upstream artifact.
pub fn plot_data(ctx: &mut Context) -> Result<(), CliError> {
    let dir = ctx.out(PLOT_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let q = ctx.cfg.quantiles.clone();
    let d = ctx.dataset()?;

    let obs_path = dir.join("observed.csv");
    let mut w = csv::Writer::from_path(&obs_path).map_err(Error::from)?;
    w.write_record(["state", "year", "srb_estimate", "tfr"]).map_err(Error::from)?;
    for (c, code) in d.states.codes().iter().enumerate() {
        for y in YearRange::SRB_MODEL.years() {
            let srb = d.srb_estimates.years.contains(y).then(|| d.srb_estimates.get(c, y)).flatten();
            let tfr = d.tfr.get(c, y);
            if srb.is_some() || tfr.is_some() {
                let s = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([code.clone(), y.to_string(), s(srb), s(tfr)]).map_err(Error::from)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&obs_path, e))?;

    let bands = [
        (DSRB_TRAJECTORIES, "log_dsrb", "dsrb_bands.csv", true),
        (SRB_TRAJECTORIES, "srb", "srb_bands.csv", false),
        (AMFB_TRAJECTORIES, "amfb", "amfb_bands.csv", false),
    ];
    for (src, value, dst, exp) in bands {
        if !ctx.out(src).exists() {
            continue;
        }
        let t = ctx.trajectories(src, value)?;
        let t = if exp { t.map(f64::exp) } else { t };
        write_summary(&t.summarize(&q), &["state", "year"], &q, &dir.join(dst))?;
    }
    if ctx.out(SRB_DRAWS).is_dir() {
        let draws = ctx.draws(SRB_DRAWS)?;
        let model = ctx.srb_model(&d)?;
        write_summary(&tfr_effect_summary(&draws, &model, &q)?, &["state", "tfr"], &q, &dir.join("tfr_effect.csv"))?;
        write_summary(&dsrb_effect_summary(&draws, &model, &q)?, &["state"], &q, &dir.join("dsrb_effect.csv"))?;
    }
    ctx.produced(PLOT_DIR)
}

pub fn run_all(ctx: &mut Context) -> Result<(), CliError> {
    ctx.cfg.require_seed()?;
    if let Some(women) = ctx.cfg.women.clone() {
        // Keep inputs untouched: derived observations go to the output
        // directory and the data directory is re-pointed there.
        let staged = ctx.out("data");
        std::fs::create_dir_all(&staged).map_err(|e| Error::io(&staged, e))?;
        for name in ["srb_estimates.csv", "tfr.csv", "births.csv"] {
            let from = ctx.cfg.data_dir.join(name);
            std::fs::copy(&from, staged.join(name)).map_err(|e| Error::io(&from, e))?;
        }
        jackknife(ctx, &women, Some(&staged.join("dsrb_obs.csv")))?;
        log::info!("rebuilt DSRB observations from {}", women.display());
        ctx.cfg.data_dir = staged;
    }
    fit_dsrb_cmd(ctx)?;
    project_dsrb_cmd(ctx)?;
    fit_srb_cmd(ctx)?;
    project_srb_cmd(ctx)?;
    missing_births(ctx)?;
    classify(ctx)?;
    diagnose(ctx, None)?;
    plot_data(ctx)?;
    if ctx.cfg.validation.enabled {
        validate(ctx)?;
    }
    Ok(())
}

pub fn synth_fixture(dir: &Path, seed: u64, states: usize) -> Result<(), CliError> {
    let s = synth::generate(&SynthConfig {
        seed,
        states,
        ..SynthConfig::default()
    })?;
    synth::write_fixture(&s, dir)?;
    Ok(())
}
