//! Synthetic truths and stratified two-stage PPS cluster surveys.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coverage_models::{ModelClass, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::GaussHermite;
use crate::rng::{rng_for, Stream};
use crate::spatial_field::{
    build_lattice, project, spde_precision, FieldHyperparams, FieldSampler, DEFAULT_NODE_CAP,
};
use crate::stats::expit;
use crate::survey_data::{
    save_population_grid, write_ascii_grid, AreaId, AsciiGrid, BoundingBox, ClusterObservation, GridCell,
    GridPaths, PopulationGrid, RasterGeometry,
};

/// Layout of a synthetic country: a raster split into Voronoi states, each
/// split into Voronoi LGAs, with scattered urban cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGridSpec {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub states: usize,
    pub lgas_per_state: usize,
    /// Expected share of cells flagged urban.
    pub urban_share: f64,
    /// Median population of urban and rural cells.
    pub urban_pop: f64,
    pub rural_pop: f64,
    /// SD of log population around those medians.
    pub pop_log_sd: f64,
    /// Covariates, each iid standard normal per cell.
    pub covariate_names: Vec<String>,
}

impl Default for SyntheticGridSpec {
    fn default() -> Self {
        Self {
            ncols: 80,
            nrows: 80,
            xllcorner: 3.0,
            yllcorner: 4.0,
            cellsize: 0.15,
            states: 37,
            lgas_per_state: 4,
            urban_share: 0.2,
            urban_pop: 400.0,
            rural_pop: 100.0,
            pop_log_sd: 0.5,
            covariate_names: vec!["x1".into()],
        }
    }
}

fn check_grid_spec(spec: &SyntheticGridSpec) -> Result<()> {
    let cells = spec.ncols * spec.nrows;
    if cells == 0 || !(spec.cellsize > 0.0) {
        return Err(Error::Validation("synthetic grid needs cells and a positive cellsize".into()));
    }
    if spec.states == 0 || spec.lgas_per_state == 0 || spec.states * spec.lgas_per_state > cells {
        return Err(Error::Validation(format!(
            "{} states × {} LGAs do not fit in {cells} cells",
            spec.states, spec.lgas_per_state
        )));
    }
    if !(0.0..=1.0).contains(&spec.urban_share) || !(spec.urban_pop > 0.0) || !(spec.rural_pop > 0.0) {
        return Err(Error::Validation("invalid urban share or population medians".into()));
    }
    if !(spec.pop_log_sd >= 0.0) {
        return Err(Error::Validation("pop_log_sd must be non-negative".into()));
    }
    Ok(())
}

fn nearest(points: &[(f64, f64)], p: (f64, f64)) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Generates a synthetic population grid. Every state receives at least one
/// urban and one rural cell, and every LGA at least one cell.
pub fn synthetic_grid(spec: &SyntheticGridSpec, seed: u64) -> Result<PopulationGrid> {
    check_grid_spec(spec)?;
    let mut rng = rng_for(seed, Stream::Grid, 0);
    let geometry = RasterGeometry {
        ncols: spec.ncols,
        nrows: spec.nrows,
        xllcorner: spec.xllcorner,
        yllcorner: spec.yllcorner,
        cellsize: spec.cellsize,
    };
    let n = geometry.len();
    let centres: Vec<(f64, f64)> = (0..n)
        .map(|k| geometry.cell_center(k / spec.ncols, k % spec.ncols))
        .collect();

    // States: Voronoi cells of distinct random seed cells.
    let state_seeds = rand::seq::index::sample(&mut rng, n, spec.states).into_vec();
    let state_pts: Vec<(f64, f64)> = state_seeds.iter().map(|&k| centres[k]).collect();
    let state_of: Vec<usize> = centres.iter().map(|&p| nearest(&state_pts, p)).collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.states];
    for (k, &s) in state_of.iter().enumerate() {
        members[s].push(k);
    }
    let mut areas = Vec::new();
    let mut area_of = vec![0usize; n];
    for (s, cells) in members.iter().enumerate() {
        let n_lga = spec.lgas_per_state.min(cells.len());
        let picks = rand::seq::index::sample(&mut rng, cells.len(), n_lga).into_vec();
        let lga_pts: Vec<(f64, f64)> = picks.iter().map(|&i| centres[cells[i]]).collect();
        let base = areas.len();
        for l in 0..n_lga {
            areas.push(AreaId {
                code: (base + l + 1) as i64,
                state_id: format!("S{:02}", s + 1),
                lga_id: format!("S{:02}-L{:02}", s + 1, l + 1),
            });
        }
        for &k in cells {
            area_of[k] = base + nearest(&lga_pts, centres[k]);
        }
    }

    let mut urban: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < spec.urban_share).collect();
    for cells in &members {
        if cells.len() >= 2 {
            if !cells.iter().any(|&k| urban[k]) {
                urban[cells[rng.random_range(0..cells.len())]] = true;
            }
            if cells.iter().all(|&k| urban[k]) {
                urban[cells[rng.random_range(0..cells.len())]] = false;
            }
        }
    }

    let urban_pop = LogNormal::new(spec.urban_pop.ln(), spec.pop_log_sd)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let rural_pop = LogNormal::new(spec.rural_pop.ln(), spec.pop_log_sd)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let cells = (0..n)
        .map(|k| {
            let pop = if urban[k] {
                urban_pop.sample(&mut rng)
            } else {
                rural_pop.sample(&mut rng)
            };
            let covariates = (0..spec.covariate_names.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            GridCell {
                row: k / spec.ncols,
                col: k % spec.ncols,
                lon: centres[k].0,
                lat: centres[k].1,
                pop,
                urban: urban[k],
                covariates,
                area: Some(area_of[k]),
            }
        })
        .collect();
    let grid = PopulationGrid {
        geometry,
        covariate_names: spec.covariate_names.clone(),
        areas,
        cells,
    };
    grid.validate()?;
    Ok(grid)
}

/// Generating parameters of a synthetic truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Option<f64>,
    pub rho: f64,
    /// `0` switches the field off.
    pub sigma_s: f64,
    pub d: Option<f64>,
    pub sigma_nugget: Option<f64>,
}

impl TruthParams {
    fn check(&self, class: ModelClass, n_cov: usize) -> Result<()> {
        if self.beta.len() != n_cov {
            return Err(Error::Spec(format!(
                "{} coefficients for {n_cov} grid covariates",
                self.beta.len()
            )));
        }
        match (class.has_dispersion(), self.d) {
            (true, None) => return Err(Error::Spec(format!("{class} truth needs d"))),
            (false, Some(_)) => return Err(Error::Spec(format!("{class} truth does not take d"))),
            (true, Some(d)) if !(d > 0.0) => return Err(Error::Spec(format!("d must be positive, got {d}"))),
            _ => {}
        }
        match (class.has_nugget(), self.sigma_nugget) {
            (true, None) => return Err(Error::Spec(format!("{class} truth needs sigma_nugget"))),
            (false, Some(_)) => {
                return Err(Error::Spec(format!("{class} truth does not take sigma_nugget")))
            }
            (true, Some(s)) if !(s >= 0.0) => {
                return Err(Error::Spec(format!("sigma_nugget must be non-negative, got {s}")))
            }
            _ => {}
        }
        if !(self.sigma_s >= 0.0) || (self.sigma_s > 0.0 && !(self.rho > 0.0)) {
            return Err(Error::Spec("field needs rho > 0 and sigma_s >= 0".into()));
        }
        Ok(())
    }
}

/// A grid with its true coverage surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub grid: PopulationGrid,
    pub class: ModelClass,
    pub params: TruthParams,
    pub seed: u64,
    /// Field value at every cell.
    pub field: Vec<f64>,
    /// `α + βᵀx + γ·urban + S` per cell.
    pub eta: Vec<f64>,
    /// Per-cell between-cluster nugget (`BinomialTs` only).
    pub nuggets: Option<Vec<f64>>,
    /// Target coverage per cell.
    pub p_true: Vec<f64>,
}

/// Draws a truth on `grid`. The field is sampled on a lattice at the grid
/// resolution padded by `ρ`, then interpolated to cell centres.
///
/// `p_true` is `expit(η)` for binomial and beta-binomial truths,
/// `expit(η + ε)` for `BinomialTs`, and the exact logit-normal mean
/// `E[expit(η + δ)]` for `LonoBinomialOd`, whose `δ` is redrawn every time a
/// cluster is surveyed.
pub fn simulate_truth(
    grid: &PopulationGrid,
    params: &TruthParams,
    class: ModelClass,
    seed: u64,
) -> Result<SyntheticTruth> {
    params.check(class, grid.covariate_names.len())?;
    let points = grid.points();
    let field = if params.sigma_s > 0.0 {
        let bbox = BoundingBox::enclosing(points.iter().copied())
            .ok_or_else(|| Error::Validation("grid has no cells".into()))?;
        let lattice = build_lattice(&bbox, grid.geometry.cellsize, params.rho, DEFAULT_NODE_CAP)?;
        let hyper = FieldHyperparams::new(params.rho, params.sigma_s)?;
        let sampler = FieldSampler::new(spde_precision(&lattice, &hyper)?)?;
        let mut rng = rng_for(seed, Stream::Field, 0);
        let nodes = sampler.draw(&mut rng);
        project(&lattice, &points)?.apply(&nodes)
    } else {
        vec![0.0; grid.cells.len()]
    };
    let eta: Vec<f64> = grid
        .cells
        .iter()
        .zip(&field)
        .map(|(c, s)| {
            let xb: f64 = params.beta.iter().zip(&c.covariates).map(|(b, x)| b * x).sum();
            let u = match params.gamma {
                Some(g) if c.urban => g,
                _ => 0.0,
            };
            params.alpha + xb + u + s
        })
        .collect();
    let clamp = |p: f64| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let (nuggets, p_true) = match class {
        ModelClass::BinomialNn | ModelClass::BetaBinomialOd => (None, eta.iter().map(|&e| clamp(expit(e))).collect()),
        ModelClass::BinomialTs => {
            let sd = params.sigma_nugget.unwrap_or(0.0);
            let mut rng = rng_for(seed, Stream::Truth, 0);
            let eps: Vec<f64> = eta.iter().map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            let p = eta.iter().zip(&eps).map(|(e, d)| clamp(expit(e + d))).collect();
            (Some(eps), p)
        }
        ModelClass::LonoBinomialOd => {
            let sd = params.sigma_nugget.unwrap_or(0.0);
            let gh = GaussHermite::new(64);
            let p = eta
                .iter()
                .map(|&e| {
                    if sd == 0.0 {
                        clamp(expit(e))
                    } else {
                        clamp(gh.normal_expectation(sd, |d| expit(e + d)))
                    }
                })
                .collect();
            (None, p)
        }
    };
    Ok(SyntheticTruth {
        grid: grid.clone(),
        class,
        params: params.clone(),
        seed,
        field,
        eta,
        nuggets,
        p_true,
    })
}

/// Stratified two-stage design: strata are state × urban/rural; PSUs are
/// drawn PPS within each stratum, then a fixed number of households per PSU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyDesign {
    pub psus_urban: usize,
    pub psus_rural: usize,
    pub households_per_psu: u32,
    /// Poisson rate of eligible children per household before truncation.
    pub children_rate: f64,
    pub children_max: u32,
}

impl Default for SurveyDesign {
    fn default() -> Self {
        Self {
            psus_urban: 2,
            psus_rural: 2,
            households_per_psu: 30,
            children_rate: 0.3,
            children_max: 2,
        }
    }
}

impl SurveyDesign {
    pub fn validate(&self) -> Result<()> {
        if self.psus_urban == 0 || self.psus_rural == 0 {
            return Err(Error::Validation("every stratum needs at least one PSU".into()));
        }
        if self.households_per_psu == 0 {
            return Err(Error::Validation("households per PSU must be at least 1".into()));
        }
        if !(self.children_rate > 0.0) || self.children_max == 0 {
            return Err(Error::Validation("children distribution must allow at least one child".into()));
        }
        Ok(())
    }

    /// Truncated Poisson probabilities on `0..=children_max`.
    fn children_pmf(&self) -> Vec<f64> {
        let mut pmf = Vec::with_capacity(self.children_max as usize + 1);
        let mut term = 1.0;
        for k in 0..=self.children_max {
            if k > 0 {
                term *= self.children_rate / k as f64;
            }
            pmf.push(term);
        }
        let total: f64 = pmf.iter().sum();
        pmf.iter().map(|p| p / total).collect()
    }
}

/// Systematic PPS without replacement on a randomly rotated list.
/// Units at least as large as the sampling interval are taken with
/// certainty. Returns positions into `sizes`, ascending.
pub fn systematic_pps<R: Rng + ?Sized>(sizes: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0.0).collect();
    let mut chosen = Vec::with_capacity(k);
    loop {
        let need = k - chosen.len();
        if need == 0 || remaining.is_empty() {
            break;
        }
        let total: f64 = remaining.iter().map(|&i| sizes[i]).sum();
        let interval = total / need as f64;
        let (certain, rest): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&i| sizes[i] >= interval);
        if certain.is_empty() {
            break;
        }
        chosen.extend(certain);
        remaining = rest;
    }
    let need = k - chosen.len();
    if need > 0 && !remaining.is_empty() {
        let shift = rng.random_range(0..remaining.len());
        remaining.rotate_left(shift);
        let total: f64 = remaining.iter().map(|&i| sizes[i]).sum();
        let interval = total / need as f64;
        let start = rng.random::<f64>() * interval;
        let mut pos = 0;
        let mut cum = sizes[remaining[0]];
        for j in 0..need {
            let target = start + j as f64 * interval;
            while cum <= target && pos + 1 < remaining.len() {
                pos += 1;
                cum += sizes[remaining[pos]];
            }
            chosen.push(remaining[pos]);
        }
    }
    chosen.sort_unstable();
    chosen.dedup();
    chosen
}

fn sample_children(pmf: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    (pmf.len() - 1) as u32
}

/// Draws one survey from `truth`. Clusters come out in stratum order
/// (state id, urban before rural) and are named `<state>-U01`, `<state>-R01`, …
/// PSUs whose sampled households contain no children are re-interviewed
/// with fresh households so that every cluster has `n ≥ 1`.
pub fn draw_survey(truth: &SyntheticTruth, design: &SurveyDesign, seed: u64) -> Result<Vec<ClusterObservation>> {
    design.validate()?;
    let grid = &truth.grid;
    let mut strata: BTreeMap<(String, bool), Vec<usize>> = BTreeMap::new();
    for (g, c) in grid.cells.iter().enumerate() {
        if let Some(state) = grid.state_of(c) {
            strata.entry((state.to_string(), !c.urban)).or_default().push(g);
        }
    }
    // Every state must supply both strata.
    let states: Vec<String> = strata.keys().map(|(s, _)| s.clone()).collect();
    for s in &states {
        for rural in [false, true] {
            strata.entry((s.clone(), rural)).or_default();
        }
    }
    let pmf = design.children_pmf();
    let mut rng = rng_for(seed, Stream::Survey, 0);
    let mut out = Vec::new();
    for ((state, rural), cells) in &strata {
        let k = if *rural { design.psus_rural } else { design.psus_urban };
        let label = format!("{state}/{}", if *rural { "rural" } else { "urban" });
        let sizes: Vec<f64> = cells.iter().map(|&g| grid.cells[g].pop).collect();
        if sizes.iter().filter(|&&p| p > 0.0).count() < k {
            return Err(Error::DesignInfeasible(label));
        }
        let picks = systematic_pps(&sizes, k, &mut rng);
        for (j, &pos) in picks.iter().enumerate() {
            let g = cells[pos];
            let cell = &grid.cells[g];
            let n = loop {
                let n: u32 = (0..design.households_per_psu)
                    .map(|_| sample_children(&pmf, &mut rng))
                    .sum();
                if n > 0 {
                    break n;
                }
            };
            let p = match truth.class {
                ModelClass::BinomialNn | ModelClass::BinomialTs => truth.p_true[g],
                ModelClass::BetaBinomialOd => {
                    let mu = truth.p_true[g];
                    let d = truth.params.d.unwrap_or(1.0);
                    let beta = Beta::new(mu * d, (1.0 - mu) * d).map_err(|e| Error::Numeric(e.to_string()))?;
                    beta.sample(&mut rng)
                }
                ModelClass::LonoBinomialOd => {
                    let sd = truth.params.sigma_nugget.unwrap_or(0.0);
                    let delta = Normal::new(0.0, sd).map_err(|e| Error::Numeric(e.to_string()))?;
                    expit(truth.eta[g] + delta.sample(&mut rng))
                }
            };
            let y = Binomial::new(n as u64, p.clamp(0.0, 1.0))
                .map_err(|e| Error::Numeric(e.to_string()))?
                .sample(&mut rng) as u32;
            out.push(ClusterObservation {
                cluster_id: format!("{state}-{}{:02}", if *rural { 'R' } else { 'U' }, j + 1),
                lon: cell.lon,
                lat: cell.lat,
                state_id: state.clone(),
                lga_id: grid.lga_of(cell).map(str::to_string),
                urban: cell.urban,
                n,
                y,
                covariates: cell.covariates.clone(),
            });
        }
    }
    Ok(out)
}

/// Writes the truth's grid rasters, `p_true.asc` and `truth.json` into `dir`.
pub fn write_truth(dir: impl AsRef<Path>, truth: &SyntheticTruth) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = &truth.grid;
    save_population_grid(grid, &GridPaths::in_dir(dir, &grid.covariate_names))?;
    let g = grid.geometry;
    let mut values = vec![None; g.len()];
    for (c, p) in grid.cells.iter().zip(&truth.p_true) {
        values[c.row * g.ncols + c.col] = Some(*p);
    }
    write_ascii_grid(dir.join("p_true.asc"), &AsciiGrid::new(g, values))?;
    #[derive(Serialize)]
    struct Meta<'a> {
        class: ModelClass,
        params: &'a TruthParams,
        seed: u64,
    }
    let meta = Meta {
        class: truth.class,
        params: &truth.params,
        seed: truth.seed,
    };
    let path = dir.join("truth.json");
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
