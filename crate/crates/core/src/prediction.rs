//! Coverage draws at grid cells and admin areas.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage_models::{lono_target, ts_target, ModelClass};
use crate::error::{Error, Result};
use crate::inference::PosteriorDraws;
use crate::matrix_io::{read_header, read_matrix, write_end, write_header, write_matrix};
use crate::rng::{rng_for, Stream};
use crate::spatial_field::project;
use crate::stats::expit;
use crate::survey_data::{AggregationWeights, Level, PopulationGrid};

pub const DRAWS_MAGIC: &str = "VAXDRAWS1";
pub const DEFAULT_PREDICTION_DRAWS: usize = 1000;

/// `units × M` matrix of coverage draws; column `m` comes from joint draw `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageDraws {
    pub unit_ids: Vec<String>,
    pub values: Array2<f64>,
    pub level: Level,
    pub class: ModelClass,
}

impl CoverageDraws {
    pub fn new(unit_ids: Vec<String>, values: Array2<f64>, level: Level, class: ModelClass) -> Result<Self> {
        if unit_ids.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} unit ids for {} rows",
                unit_ids.len(),
                values.nrows()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("coverage draw {v} outside [0, 1]")));
        }
        Ok(Self {
            unit_ids,
            values,
            level,
            class,
        })
    }

    pub fn units(&self) -> usize {
        self.values.nrows()
    }

    pub fn draws(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, unit: usize) -> Vec<f64> {
        self.values.row(unit).to_vec()
    }
}

pub fn cell_id(row: usize, col: usize) -> String {
    format!("r{row}c{col}")
}

/// Cell coverage draws using up to [`DEFAULT_PREDICTION_DRAWS`] posterior draws.
pub fn predict_cells(draws: &PosteriorDraws, grid: &PopulationGrid, seed: u64) -> Result<CoverageDraws> {
    predict_cells_with(draws, grid, DEFAULT_PREDICTION_DRAWS, seed)
}

/// Cell coverage draws from `n_draws` evenly spaced posterior draws (all
/// draws if fewer are available). `BinomialTs` nuggets come from a random
/// stream keyed by cell index, so the result does not depend on threading.
pub fn predict_cells_with(
    draws: &PosteriorDraws,
    grid: &PopulationGrid,
    n_draws: usize,
    seed: u64,
) -> Result<CoverageDraws> {
    let spec = &draws.spec;
    if grid.covariate_names != spec.covariate_names {
        return Err(Error::Dimension(format!(
            "grid covariates {:?} do not match model covariates {:?}",
            grid.covariate_names, spec.covariate_names
        )));
    }
    let picks = draws.draw_indices(n_draws)?;
    let proj = project(&draws.lattice, &grid.points())?;
    let class = spec.class;
    let rows: Vec<Vec<f64>> = grid
        .cells
        .par_iter()
        .enumerate()
        .map(|(g, cell)| {
            let mut rng = rng_for(seed, Stream::Prediction, g as u64);
            picks
                .iter()
                .map(|&m| {
                    let field = draws.field.row(m);
                    let s: f64 = proj.row(g).map(|(k, w)| w * field[k]).sum();
                    let xb: f64 = draws.beta.row(m).iter().zip(&cell.covariates).map(|(b, x)| b * x).sum();
                    let urban = match &draws.gamma {
                        Some(gm) if cell.urban => gm[m],
                        _ => 0.0,
                    };
                    let eta = draws.alpha[m] + xb + urban + s;
                    match class {
                        ModelClass::BinomialNn | ModelClass::BetaBinomialOd => expit(eta),
                        ModelClass::LonoBinomialOd => lono_target(eta, nugget_sd(draws, m)),
                        ModelClass::BinomialTs => {
                            let e: f64 = rng.sample(StandardNormal);
                            ts_target(eta, nugget_sd(draws, m) * e)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let m = picks.len();
    let mut values = Array2::zeros((rows.len(), m));
    for (g, row) in rows.into_iter().enumerate() {
        values.row_mut(g).assign(&ndarray::Array1::from(row));
    }
    let unit_ids = grid.cells.iter().map(|c| cell_id(c.row, c.col)).collect();
    CoverageDraws::new(unit_ids, values, Level::Cell, class)
}

fn nugget_sd(draws: &PosteriorDraws, m: usize) -> f64 {
    draws
        .sigma_nugget
        .as_ref()
        .map(|s| s[m])
        .expect("nugget classes always carry sigma_nugget draws")
}

/// `p_i^(m) = Σ_g q_ig p_ig^(m)` for every area in `weights`.
pub fn aggregate(cell_draws: &CoverageDraws, weights: &AggregationWeights) -> Result<CoverageDraws> {
    if cell_draws.level != Level::Cell {
        return Err(Error::Validation(format!(
            "aggregation needs cell-level draws, got {}",
            cell_draws.level
        )));
    }
    let m = cell_draws.draws();
    let mut values = Array2::zeros((weights.areas.len(), m));
    for (i, area) in weights.areas.iter().enumerate() {
        if area.entries.is_empty() {
            return Err(Error::CoverageGap(format!("area `{}` has no cells", area.area_id)));
        }
        let mut out = values.row_mut(i);
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for &(g, q) in &area.entries {
            if g >= cell_draws.units() {
                return Err(Error::CoverageGap(format!(
                    "area `{}` references missing cell {g}",
                    area.area_id
                )));
            }
            let row = cell_draws.values.row(g);
            out.scaled_add(q, &row);
            for (k, v) in row.iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        // a convex combination stays inside the range of its inputs; the
        // clamp removes round-off, so a constant surface aggregates exactly
        for (k, v) in out.iter_mut().enumerate() {
            *v = v.clamp(lo[k], hi[k]);
        }
    }
    let ids = weights.areas.iter().map(|a| a.area_id.clone()).collect();
    CoverageDraws::new(ids, values, weights.level, cell_draws.class)
}

#[derive(Serialize, Deserialize)]
struct DrawsHeader {
    level: Level,
    class: ModelClass,
    draws: usize,
    unit_ids: Vec<String>,
}

pub fn write_coverage_draws(path: impl AsRef<Path>, draws: &CoverageDraws) -> Result<()> {
    let path = path.as_ref();
    let header = DrawsHeader {
        level: draws.level,
        class: draws.class,
        draws: draws.draws(),
        unit_ids: draws.unit_ids.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write_header(&mut w, DRAWS_MAGIC, &json).map_err(io)?;
    write_matrix(&mut w, "values", draws.units(), draws.draws(), draws.values.iter().copied()).map_err(io)?;
    write_end(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_coverage_draws(path: impl AsRef<Path>) -> Result<CoverageDraws> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let header: DrawsHeader = serde_json::from_slice(&read_header(&mut r, DRAWS_MAGIC)?)?;
    let mat = read_matrix(&mut r)?.ok_or_else(|| Error::Format("missing values matrix".into()))?;
    if mat.name != "values" || mat.rows != header.unit_ids.len() || mat.cols != header.draws {
        return Err(Error::Format(format!(
            "values matrix {}×{} does not match header {}×{}",
            mat.rows,
            mat.cols,
            header.unit_ids.len(),
            header.draws
        )));
    }
    let values = Array2::from_shape_vec((mat.rows, mat.cols), mat.data)
        .map_err(|e| Error::Format(e.to_string()))?;
    CoverageDraws::new(header.unit_ids, values, header.level, header.class)
}
