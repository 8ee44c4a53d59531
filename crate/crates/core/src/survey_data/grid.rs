use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{read_ascii_grid, write_ascii_grid, AsciiGrid, RasterGeometry};
use crate::error::{Error, Result};

/// Admin area identified by its membership-raster code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaId {
    pub code: i64,
    pub state_id: String,
    pub lga_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub lon: f64,
    pub lat: f64,
    pub pop: f64,
    pub urban: bool,
    pub covariates: Vec<f64>,
    /// Index into [`PopulationGrid::areas`]; `None` outside every admin area.
    pub area: Option<usize>,
}

/// Gridded population, urbanicity, covariates and admin membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationGrid {
    pub geometry: RasterGeometry,
    pub covariate_names: Vec<String>,
    pub areas: Vec<AreaId>,
    pub cells: Vec<GridCell>,
}

impl PopulationGrid {
    pub fn state_of(&self, cell: &GridCell) -> Option<&str> {
        cell.area.map(|a| self.areas[a].state_id.as_str())
    }

    pub fn lga_of(&self, cell: &GridCell) -> Option<&str> {
        cell.area.map(|a| self.areas[a].lga_id.as_str())
    }

    /// Total population per state id.
    pub fn state_totals(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            if let Some(s) = self.state_of(c) {
                *out.entry(s.to_string()).or_insert(0.0) += c.pop;
            }
        }
        out
    }

    /// Checks the population and lattice invariants.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !(g.cellsize > 0.0) {
            return Err(Error::Validation(format!("cellsize must be positive ({g})")));
        }
        let mut totals = vec![0.0; self.areas.len()];
        let mut referenced = vec![false; self.areas.len()];
        for c in &self.cells {
            if !(c.pop >= 0.0) || !c.pop.is_finite() {
                return Err(Error::Validation(format!(
                    "cell ({}, {}) has invalid population {}",
                    c.row, c.col, c.pop
                )));
            }
            if c.covariates.len() != self.covariate_names.len() {
                return Err(Error::Dimension(format!(
                    "cell ({}, {}) has {} covariates, expected {}",
                    c.row,
                    c.col,
                    c.covariates.len(),
                    self.covariate_names.len()
                )));
            }
            if let Some(a) = c.area {
                totals[a] += c.pop;
                referenced[a] = true;
            }
        }
        for (a, area) in self.areas.iter().enumerate() {
            if referenced[a] && totals[a] <= 0.0 {
                return Err(Error::DegenerateArea(format!(
                    "{}/{}",
                    area.state_id, area.lga_id
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| (c.lon, c.lat)).collect()
    }
}

/// File locations making up a population grid on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridPaths {
    pub population: PathBuf,
    pub membership: PathBuf,
    /// CSV `code,state_id,lga_id`.
    pub membership_table: PathBuf,
    /// 0/1 raster; NODATA counts as rural.
    pub urban: PathBuf,
    /// `(name, raster path)` in model order.
    pub covariates: Vec<(String, PathBuf)>,
}

impl GridPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: &Path, covariate_names: &[String]) -> Self {
        Self {
            population: dir.join("population.asc"),
            membership: dir.join("membership.asc"),
            membership_table: dir.join("membership.csv"),
            urban: dir.join("urban.asc"),
            covariates: covariate_names
                .iter()
                .map(|n| (n.clone(), dir.join(format!("cov_{n}.asc"))))
                .collect(),
        }
    }
}

fn read_table(path: &Path) -> Result<Vec<AreaId>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (ci, si, li) = (col("code")?, col("state_id")?, col("lga_id")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let code = rec[ci].parse::<i64>().map_err(|_| Error::Row {
            row: i + 1,
            message: format!("bad area code `{}`", &rec[ci]),
        })?;
        out.push(AreaId {
            code,
            state_id: rec[si].to_string(),
            lga_id: rec[li].to_string(),
        });
    }
    Ok(out)
}

fn check_aligned(reference: &AsciiGrid, other: &AsciiGrid) -> Result<()> {
    if reference.geometry != other.geometry {
        return Err(Error::Alignment {
            first: reference.geometry.to_string(),
            second: other.geometry.to_string(),
        });
    }
    Ok(())
}

/// Loads aligned population, membership, urbanicity and covariate rasters.
///
/// A cell is kept when it has positive population or a defined membership;
/// kept cells need finite covariates.
pub fn load_population_grid(paths: &GridPaths) -> Result<PopulationGrid> {
    let pop = read_ascii_grid(&paths.population)?;
    let member = read_ascii_grid(&paths.membership)?;
    let urban = read_ascii_grid(&paths.urban)?;
    check_aligned(&pop, &member)?;
    check_aligned(&pop, &urban)?;
    let covs = paths
        .covariates
        .iter()
        .map(|(_, p)| {
            let g = read_ascii_grid(p)?;
            check_aligned(&pop, &g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let areas = read_table(&paths.membership_table)?;
    let by_code: BTreeMap<i64, usize> = areas.iter().enumerate().map(|(i, a)| (a.code, i)).collect();

    let geometry = pop.geometry;
    let mut cells = Vec::new();
    for row in 0..geometry.nrows {
        for col in 0..geometry.ncols {
            let k = row * geometry.ncols + col;
            let p = pop.values[k].unwrap_or(0.0);
            let area = match member.values[k] {
                Some(code) => {
                    let code_i = code as i64;
                    if code_i as f64 != code {
                        return Err(Error::Validation(format!(
                            "non-integer membership code {code} at ({row}, {col})"
                        )));
                    }
                    Some(*by_code.get(&code_i).ok_or_else(|| {
                        Error::Validation(format!("unknown membership code {code_i} at ({row}, {col})"))
                    })?)
                }
                None => None,
            };
            if area.is_none() && !(p > 0.0) {
                continue;
            }
            let covariates = covs
                .iter()
                .zip(&paths.covariates)
                .map(|(g, (name, _))| match g.values[k] {
                    Some(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Validation(format!(
                        "covariate `{name}` missing at ({row}, {col})"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let u = match urban.values[k] {
                None => false,
                Some(v) if v == 0.0 => false,
                Some(v) if v == 1.0 => true,
                Some(v) => {
                    return Err(Error::Validation(format!(
                        "urban raster must be 0/1, got {v} at ({row}, {col})"
                    )))
                }
            };
            let (lon, lat) = geometry.cell_center(row, col);
            cells.push(GridCell {
                row,
                col,
                lon,
                lat,
                pop: p,
                urban: u,
                covariates,
                area,
            });
        }
    }
    let grid = PopulationGrid {
        geometry,
        covariate_names: paths.covariates.iter().map(|(n, _)| n.clone()).collect(),
        areas,
        cells,
    };
    grid.validate()?;
    Ok(grid)
}

/// Writes every raster of `grid` to the locations in `paths`.
pub fn save_population_grid(grid: &PopulationGrid, paths: &GridPaths) -> Result<()> {
    if paths.covariates.len() != grid.covariate_names.len() {
        return Err(Error::Dimension(format!(
            "{} covariate paths for {} covariates",
            paths.covariates.len(),
            grid.covariate_names.len()
        )));
    }
    let g = grid.geometry;
    let blank = || vec![None; g.len()];
    let (mut pop, mut member, mut urban) = (blank(), blank(), blank());
    let mut covs = vec![blank(); grid.covariate_names.len()];
    for c in &grid.cells {
        let k = c.row * g.ncols + c.col;
        pop[k] = Some(c.pop);
        member[k] = c.area.map(|a| grid.areas[a].code as f64);
        urban[k] = Some(if c.urban { 1.0 } else { 0.0 });
        for (j, v) in c.covariates.iter().enumerate() {
            covs[j][k] = Some(*v);
        }
    }
    write_ascii_grid(&paths.population, &AsciiGrid::new(g, pop))?;
    write_ascii_grid(&paths.membership, &AsciiGrid::new(g, member))?;
    write_ascii_grid(&paths.urban, &AsciiGrid::new(g, urban))?;
    for (vals, (_, p)) in covs.into_iter().zip(&paths.covariates) {
        write_ascii_grid(p, &AsciiGrid::new(g, vals))?;
    }
    let mut w = csv::Writer::from_path(&paths.membership_table)?;
    w.write_record(["code", "state_id", "lga_id"])?;
    for a in &grid.areas {
        w.write_record([a.code.to_string(), a.state_id.clone(), a.lga_id.clone()])?;
    }
    w.flush()
        .map_err(|e| Error::io(&paths.membership_table, e))?;
    Ok(())
}
