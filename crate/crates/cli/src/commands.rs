use std::fs;
use std::path::{Path, PathBuf};

use vaxmap_core::coverage_models::{ModelClass, ModelSpec};
use vaxmap_core::inference::{fit, read_fit, write_fit, ConvergenceStatus};
use vaxmap_core::prediction::{aggregate, predict_cells_with, read_coverage_draws, write_coverage_draws, CoverageDraws};
use vaxmap_core::presentation::{
    classify, default_palette, exceedance, export_ridgeline, rank_distribution, read_palette, render,
    select_granularity, summarize, write_classified_csv, write_exceedance_csv, write_palette, write_rank_csv,
    write_summary_csv, Partition,
};
use vaxmap_core::simulator::{draw_survey, simulate_truth, synthetic_grid, write_truth, TruthParams};
use vaxmap_core::spatial_field::{build_lattice, Lattice};
use vaxmap_core::survey_data::{
    aggregation_weights, load_clusters, load_population_grid, save_clusters, BoundingBox, ClusterObservation,
    GridPaths, Level, PopulationGrid,
};
use vaxmap_core::validation::{validate, write_report_csv, write_report_text};

use crate::config::RunConfig;
use crate::manifest::Recorder;
use crate::CliError;

/// What a finished subcommand reports back to `main`.
pub struct Done {
    pub recorder: Recorder,
    pub status: String,
    /// Set when outputs were written but the fit did not converge.
    pub convergence_failure: Option<String>,
}

impl Done {
    fn ok(recorder: Recorder) -> Self {
        Self {
            recorder,
            status: "ok".into(),
            convergence_failure: None,
        }
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn load_grid(dir: &Path, covariates: &[String]) -> Result<PopulationGrid, CliError> {
    Ok(load_population_grid(&GridPaths::in_dir(dir, covariates))?)
}

/// Grid directory when one is configured or a previous `simulate` left one.
fn optional_grid_dir(cfg: &RunConfig) -> Option<PathBuf> {
    match &cfg.paths.grid_dir {
        Some(p) => Some(p.clone()),
        None => Some(out(cfg, "truth")).filter(|p| p.join("population.asc").exists()),
    }
}

fn default_truth(cfg: &RunConfig, class: ModelClass, grid: &PopulationGrid) -> TruthParams {
    let g = grid.geometry;
    let extent = (g.ncols as f64 * g.cellsize).hypot(g.nrows as f64 * g.cellsize);
    TruthParams {
        alpha: 0.5,
        beta: vec![0.4; grid.covariate_names.len()],
        gamma: cfg.model.include_strata.then_some(0.4),
        rho: extent / 5.0,
        sigma_s: 0.8,
        d: class.has_dispersion().then_some(3.0),
        sigma_nugget: class.has_nugget().then_some(0.5),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Done, CliError> {
    let seed = cfg.seed();
    let class = cfg.class()?;
    let grid = synthetic_grid(&cfg.simulate.grid, seed)?;
    let params = cfg
        .simulate
        .truth
        .clone()
        .unwrap_or_else(|| default_truth(cfg, class, &grid));
    let truth = simulate_truth(&grid, &params, class, seed)?;
    let data = draw_survey(&truth, &cfg.simulate.design, seed)?;
    write_truth(out(cfg, "truth"), &truth)?;
    save_clusters(out(cfg, "clusters.csv"), &data, &grid.covariate_names)?;
    println!(
        "simulated {} cells in {} areas and {} clusters ({class})",
        grid.cells.len(),
        grid.areas.len(),
        data.len()
    );
    let mut rec = Recorder::new();
    rec.output("truth");
    rec.output("clusters.csv");
    Ok(Done::ok(rec))
}

struct Prepared {
    spec: ModelSpec,
    data: Vec<ClusterObservation>,
    lattice: Lattice,
}

/// Loads clusters and builds the model spec and a lattice covering the
/// clusters and, when available, the prediction grid.
fn prepare(cfg: &RunConfig, rec: &mut Recorder) -> Result<Prepared, CliError> {
    let clusters = cfg.clusters_path()?;
    rec.input(&clusters);
    let covariates = cfg.model.covariates.clone();
    let data = load_clusters(&clusters, &covariates, None)?;
    let mut points: Vec<(f64, f64)> = data.iter().map(|c| (c.lon, c.lat)).collect();
    if let Some(dir) = optional_grid_dir(cfg) {
        if !dir.exists() {
            return Err(CliError::Validation(format!("input {} does not exist", dir.display())));
        }
        let grid = load_grid(&dir, &covariates)?;
        points.extend(grid.points());
        rec.input(&dir);
    }
    let bbox = BoundingBox::enclosing(points).ok_or_else(|| CliError::Validation("no clusters".into()))?;
    let priors = cfg.priors.resolve(&bbox);
    let padding = cfg.lattice.padding.unwrap_or(priors.rho_median);
    let lattice = build_lattice(&bbox, cfg.lattice.spacing, padding, cfg.lattice.node_cap)?;
    let spec = ModelSpec {
        class: cfg.class()?,
        include_strata: cfg.model.include_strata,
        covariate_names: covariates,
        priors,
    };
    Ok(Prepared { spec, data, lattice })
}

pub fn fit_cmd(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let p = prepare(cfg, &mut rec)?;
    let mcmc = cfg.mcmc.with_seed(cfg.seed());
    let draws = fit(&p.spec, &p.data, &p.lattice, &mcmc)?;
    write_fit(out(cfg, "fit.vaxfit"), &draws)?;
    rec.output("fit.vaxfit");
    let diag = &draws.diagnostics;
    println!(
        "{} draws on {} nodes; max R-hat {}; min ESS {:.0}",
        draws.len(),
        p.lattice.node_count(),
        diag.max_rhat().map_or("n/a".into(), |r| format!("{r:.3}")),
        diag.min_ess()
    );
    let status = serde_json::to_value(diag.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let failure = (diag.status == ConvergenceStatus::Failed).then(|| {
        let worst = diag
            .monitors
            .iter()
            .filter(|m| m.rhat.is_some_and(|r| r > vaxmap_core::inference::RHAT_FAIL))
            .map(|m| m.name.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        format!("split R-hat above {} for {worst}", vaxmap_core::inference::RHAT_FAIL)
    });
    Ok(Done {
        recorder: rec,
        status,
        convergence_failure: failure,
    })
}

pub fn predict(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let fit_path = cfg.fit_path()?;
    let grid_dir = cfg.grid_dir()?;
    rec.input(&fit_path);
    rec.input(&grid_dir);
    let draws = read_fit(&fit_path)?;
    let grid = load_grid(&grid_dir, &draws.spec.covariate_names)?;
    let cells = predict_cells_with(&draws, &grid, cfg.prediction.draws, cfg.seed())?;
    write_coverage_draws(out(cfg, "cells.vaxdraws"), &cells)?;
    rec.output("cells.vaxdraws");
    println!("{} cells × {} draws", cells.units(), cells.draws());
    Ok(Done::ok(rec))
}

fn area_level(cfg: &RunConfig) -> Result<Level, CliError> {
    let level: Level = cfg.prediction.level.parse()?;
    if level == Level::Cell {
        return Err(CliError::Validation("aggregation level must be lga, state or national".into()));
    }
    Ok(level)
}

pub fn aggregate_cmd(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let level = area_level(cfg)?;
    let cells_path = cfg.cell_draws_path()?;
    let grid_dir = cfg.grid_dir()?;
    rec.input(&cells_path);
    rec.input(&grid_dir);
    let cells = read_coverage_draws(&cells_path)?;
    let grid = load_grid(&grid_dir, &[])?;
    let areas = aggregate(&cells, &aggregation_weights(&grid, level)?)?;
    let name = format!("{level}.vaxdraws");
    write_coverage_draws(out(cfg, &name), &areas)?;
    rec.output(name);
    println!("{} {level} units × {} draws", areas.units(), areas.draws());
    Ok(Done::ok(rec))
}

fn area_draws(cfg: &RunConfig, rec: &mut Recorder) -> Result<CoverageDraws, CliError> {
    let path = cfg.area_draws_path()?;
    rec.input(&path);
    Ok(read_coverage_draws(&path)?)
}

pub fn rank(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let draws = area_draws(cfg, &mut rec)?;
    let ranks = rank_distribution(&draws)?;
    write_rank_csv(out(cfg, "rank.csv"), &ranks)?;
    rec.output("rank.csv");
    Ok(Done::ok(rec))
}

pub fn exceed(cfg: &RunConfig) -> Result<Done, CliError> {
    let thresholds = &cfg.presentation.thresholds;
    if thresholds.is_empty() {
        return Err(CliError::Validation("exceed needs at least one threshold".into()));
    }
    let mut rec = Recorder::new();
    let draws = area_draws(cfg, &mut rec)?;
    let columns = thresholds
        .iter()
        .map(|&t| Ok((t, exceedance(&draws, t)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_exceedance_csv(out(cfg, "exceedance.csv"), &draws.unit_ids, &columns)?;
    rec.output("exceedance.csv");
    Ok(Done::ok(rec))
}

/// Classified map, summaries, ridgeline data, palette and (with a grid) the
/// rendered image and legends.
pub fn classify_cmd(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let draws = area_draws(cfg, &mut rec)?;
    let p = &cfg.presentation;
    let map = if p.thresholds.is_empty() {
        let g = select_granularity(&draws, p.atcp_min, p.k_max)?;
        for (k, atcp) in &g.atcps {
            match atcp {
                Some(a) => println!("K={k} ATCP={a:.4}"),
                None => println!("K={k} ATCP=n/a (degenerate partition)"),
            }
        }
        if let Some(notice) = &g.notice {
            println!("{notice}");
        }
        println!("selected K={} at ATCP floor {}", g.k, p.atcp_min);
        g.map
    } else {
        let m = classify(&draws, &Partition::from_thresholds(&p.thresholds)?);
        println!("K={} ATCP={:.4}", m.partition.k(), m.atcp);
        m
    };
    let k = map.partition.k();
    write_classified_csv(out(cfg, "classified.csv"), &map)?;
    write_summary_csv(out(cfg, "summary.csv"), &summarize(&draws, p.ci_level)?)?;
    export_ridgeline(out(cfg, "ridgeline.csv"), &draws)?;
    let palette = match cfg.palette_path()? {
        Some(path) => {
            rec.input(&path);
            read_palette(&path)?
        }
        None => default_palette(k),
    };
    write_palette(out(cfg, "palette.csv"), &palette)?;
    for name in ["classified.csv", "summary.csv", "ridgeline.csv", "palette.csv"] {
        rec.output(name);
    }
    if let Some(dir) = optional_grid_dir(cfg) {
        rec.input(&dir);
        let grid = load_grid(&dir, &[])?;
        let r = render(&map, &grid, &palette, &cfg.output_dir, "map")?;
        for path in [r.image, r.legend_csv, r.legend_svg] {
            rec.output(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    Ok(Done::ok(rec))
}

pub fn validate_cmd(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut rec = Recorder::new();
    let p = prepare(cfg, &mut rec)?;
    let seed = cfg.seed();
    let report = validate(
        &p.spec,
        &p.data,
        &p.lattice,
        &cfg.mcmc.with_seed(seed),
        &cfg.cv_mcmc.with_seed(seed),
    )?;
    write_report_csv(out(cfg, "validation.csv"), &report)?;
    write_report_text(out(cfg, "validation.txt"), &report)?;
    rec.output("validation.csv");
    rec.output("validation.txt");
    print!("{}", fs::read_to_string(out(cfg, "validation.txt")).unwrap_or_default());
    let failed: Vec<&str> = report
        .folds
        .iter()
        .filter(|f| f.status == ConvergenceStatus::Failed)
        .map(|f| f.state.as_str())
        .collect();
    Ok(Done {
        recorder: rec,
        status: if failed.is_empty() { "ok".into() } else { "fold_failed".into() },
        convergence_failure: (!failed.is_empty())
            .then(|| format!("fits for held-out states {} did not converge", failed.join(", "))),
    })
}
