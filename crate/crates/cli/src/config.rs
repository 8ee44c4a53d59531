//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use vaxmap_core::coverage_models::ModelClass;
use vaxmap_core::inference::{McmcConfig, PriorSpec};
use vaxmap_core::simulator::{SurveyDesign, SyntheticGridSpec, TruthParams};
use vaxmap_core::spatial_field::{DEFAULT_NODE_CAP, DEFAULT_SPACING};
use vaxmap_core::survey_data::BoundingBox;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; there is no clock-based fallback.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub priors: PriorOverrides,
    pub lattice: LatticeConfig,
    pub mcmc: ChainConfig,
    pub cv_mcmc: ChainConfig,
    pub prediction: PredictionConfig,
    pub presentation: PresentationConfig,
    pub simulate: SimulateConfig,
}

/// Input locations. Unset entries default to the files earlier subcommands
/// write into the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub clusters: Option<PathBuf>,
    /// Directory holding `population.asc`, `membership.asc`,
    /// `membership.csv`, `urban.asc` and `cov_<name>.asc`.
    pub grid_dir: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    /// Cell-level draws read by `aggregate`.
    pub cell_draws: Option<PathBuf>,
    /// Area-level draws read by `rank`, `exceed` and `classify`.
    pub draws: Option<PathBuf>,
    pub palette: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub class: String,
    pub include_strata: bool,
    pub covariates: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            class: ModelClass::BinomialNn.name().into(),
            include_strata: true,
            covariates: Vec::new(),
        }
    }
}

/// Any prior field left unset keeps its domain-scaled default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    pub fixed_sd: Option<f64>,
    pub rho_median: Option<f64>,
    pub log_rho_sd: Option<f64>,
    pub log_sigma_s_mean: Option<f64>,
    pub log_sigma_s_sd: Option<f64>,
    pub log_d_mean: Option<f64>,
    pub log_d_sd: Option<f64>,
    pub log_nugget_mean: Option<f64>,
    pub log_nugget_sd: Option<f64>,
}

impl PriorOverrides {
    pub fn resolve(&self, bbox: &BoundingBox) -> PriorSpec {
        let mut p = PriorSpec::for_domain(bbox);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.fixed_sd, self.fixed_sd);
        set(&mut p.rho_median, self.rho_median);
        set(&mut p.log_rho_sd, self.log_rho_sd);
        set(&mut p.log_sigma_s_mean, self.log_sigma_s_mean);
        set(&mut p.log_sigma_s_sd, self.log_sigma_s_sd);
        set(&mut p.log_d_mean, self.log_d_mean);
        set(&mut p.log_d_sd, self.log_d_sd);
        set(&mut p.log_nugget_mean, self.log_nugget_mean);
        set(&mut p.log_nugget_sd, self.log_nugget_sd);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub spacing: f64,
    /// Defaults to the prior range median.
    pub padding: Option<f64>,
    pub node_cap: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            padding: None,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        let d = McmcConfig::with_seed(0);
        Self {
            chains: d.chains,
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
        }
    }
}

impl ChainConfig {
    pub fn with_seed(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    pub draws: usize,
    /// `lga`, `state` or `national`.
    pub level: String,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            draws: vaxmap_core::prediction::DEFAULT_PREDICTION_DRAWS,
            level: "state".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresentationConfig {
    /// Exceedance thresholds; for `classify`, fixed interior breakpoints
    /// that bypass granularity selection.
    pub thresholds: Vec<f64>,
    pub k_max: usize,
    pub atcp_min: f64,
    pub ci_level: f64,
}

impl Default for PresentationConfig {
    fn default() -> Self {
        Self {
            thresholds: Vec::new(),
            k_max: 4,
            atcp_min: 0.7,
            ci_level: 0.95,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub grid: SyntheticGridSpec,
    /// Defaults to a moderate truth for the model class and covariates.
    pub truth: Option<TruthParams>,
    pub design: SurveyDesign,
}

/// Flags shared by every subcommand; each one overrides its config entry.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    pub clusters: Option<PathBuf>,
    #[arg(long, global = true)]
    pub grid_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fit: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cell_draws: Option<PathBuf>,
    #[arg(long, global = true)]
    pub draws: Option<PathBuf>,
    #[arg(long, global = true)]
    pub palette: Option<PathBuf>,

    /// binomial-nn, beta-binomial-od, lono-binomial-od or binomial-ts.
    #[arg(long, global = true)]
    pub class: Option<String>,
    #[arg(long, global = true)]
    pub include_strata: Option<bool>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,

    #[arg(long, global = true)]
    pub rho_median: Option<f64>,
    #[arg(long, global = true)]
    pub spacing: Option<f64>,
    #[arg(long, global = true)]
    pub padding: Option<f64>,
    #[arg(long, global = true)]
    pub node_cap: Option<usize>,

    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,

    #[arg(long, global = true)]
    pub prediction_draws: Option<usize>,
    #[arg(long, global = true)]
    pub level: Option<String>,

    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    #[arg(long, global = true)]
    pub atcp_min: Option<f64>,
    #[arg(long, global = true)]
    pub ci_level: Option<f64>,
}

fn overlay<T: Clone>(dst: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *dst = v.clone();
    }
}

fn overlay_opt<T: Clone>(dst: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        dst.clone_from(v);
    }
}

impl RunConfig {
    /// Defaults, then the config file (relative paths resolved against its
    /// directory), then the flags.
    pub fn load(flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.rebase(base);
                cfg
            }
            None => RunConfig::default(),
        };
        if cfg.output_dir.as_os_str().is_empty() {
            cfg.output_dir = PathBuf::from(".");
        }
        cfg.apply(flags);
        cfg.check()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let p = &mut self.paths;
        for slot in [
            &mut p.clusters,
            &mut p.grid_dir,
            &mut p.fit,
            &mut p.cell_draws,
            &mut p.draws,
            &mut p.palette,
        ] {
            if let Some(path) = slot {
                fix(path);
            }
        }
    }

    fn apply(&mut self, f: &Overrides) {
        overlay_opt(&mut self.seed, &f.seed);
        overlay(&mut self.output_dir, &f.output_dir);
        overlay_opt(&mut self.paths.clusters, &f.clusters);
        overlay_opt(&mut self.paths.grid_dir, &f.grid_dir);
        overlay_opt(&mut self.paths.fit, &f.fit);
        overlay_opt(&mut self.paths.cell_draws, &f.cell_draws);
        overlay_opt(&mut self.paths.draws, &f.draws);
        overlay_opt(&mut self.paths.palette, &f.palette);
        overlay(&mut self.model.class, &f.class);
        overlay(&mut self.model.include_strata, &f.include_strata);
        overlay(&mut self.model.covariates, &f.covariates);
        overlay_opt(&mut self.priors.rho_median, &f.rho_median);
        overlay(&mut self.lattice.spacing, &f.spacing);
        overlay_opt(&mut self.lattice.padding, &f.padding);
        overlay(&mut self.lattice.node_cap, &f.node_cap);
        overlay(&mut self.mcmc.chains, &f.chains);
        overlay(&mut self.mcmc.iterations, &f.iterations);
        overlay(&mut self.mcmc.burn_in, &f.burn_in);
        overlay(&mut self.mcmc.thin, &f.thin);
        overlay(&mut self.prediction.draws, &f.prediction_draws);
        overlay(&mut self.prediction.level, &f.level);
        overlay(&mut self.presentation.thresholds, &f.thresholds);
        overlay(&mut self.presentation.k_max, &f.k_max);
        overlay(&mut self.presentation.atcp_min, &f.atcp_min);
        overlay(&mut self.presentation.ci_level, &f.ci_level);
    }

    fn check(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::Validation(
                "a seed is required (set `seed` in the config or pass --seed)".into(),
            ));
        }
        self.class()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("checked at load")
    }

    pub fn class(&self) -> Result<ModelClass, CliError> {
        self.model.class.parse().map_err(CliError::Core)
    }

    fn input(&self, set: &Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
        let path = set.clone().unwrap_or_else(|| self.output_dir.join(default));
        if !path.exists() {
            return Err(CliError::Validation(format!("input {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn clusters_path(&self) -> Result<PathBuf, CliError> {
        self.input(&self.paths.clusters, "clusters.csv")
    }

    pub fn grid_dir(&self) -> Result<PathBuf, CliError> {
        self.input(&self.paths.grid_dir, "truth")
    }

    pub fn fit_path(&self) -> Result<PathBuf, CliError> {
        self.input(&self.paths.fit, "fit.vaxfit")
    }

    pub fn cell_draws_path(&self) -> Result<PathBuf, CliError> {
        self.input(&self.paths.cell_draws, "cells.vaxdraws")
    }

    pub fn area_draws_path(&self) -> Result<PathBuf, CliError> {
        let default = format!("{}.vaxdraws", self.prediction.level);
        self.input(&self.paths.draws, &default)
    }

    pub fn palette_path(&self) -> Result<Option<PathBuf>, CliError> {
        match &self.paths.palette {
            Some(p) => self.input(&Some(p.clone()), "").map(Some),
            None => Ok(None),
        }
    }
}
