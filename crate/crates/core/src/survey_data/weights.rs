use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::PopulationGrid;
use crate::error::{Error, Result};

/// Spatial level of a set of units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Cell,
    Lga,
    State,
    National,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Cell => "cell",
            Level::Lga => "lga",
            Level::State => "state",
            Level::National => "national",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(Level::Cell),
            "lga" => Ok(Level::Lga),
            "state" => Ok(Level::State),
            "national" => Ok(Level::National),
            other => Err(Error::Validation(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaWeights {
    pub area_id: String,
    /// `(cell index in the grid, weight)`.
    pub entries: Vec<(usize, f64)>,
}

/// Population-proportional weights of grid cells within each area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub level: Level,
    pub areas: Vec<AreaWeights>,
}

impl AggregationWeights {
    pub fn area(&self, id: &str) -> Option<&AreaWeights> {
        self.areas.iter().find(|a| a.area_id == id)
    }
}

/// `q_g = pop_g / Σ_{g' ∈ area} pop_g'` for every area at `level`.
/// Areas are ordered by id; cells outside any area are ignored.
pub fn aggregation_weights(grid: &PopulationGrid, level: Level) -> Result<AggregationWeights> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in grid.cells.iter().enumerate() {
        let key = match level {
            Level::Cell => {
                return Err(Error::Validation(
                    "cell level needs no aggregation weights".into(),
                ))
            }
            Level::National => c.area.map(|_| "national".to_string()),
            Level::State => grid.state_of(c).map(str::to_string),
            Level::Lga => grid.lga_of(c).map(str::to_string),
        };
        if let Some(k) = key {
            groups.entry(k).or_default().push(i);
        }
    }
    let areas = groups
        .into_iter()
        .map(|(area_id, cells)| {
            let total: f64 = cells.iter().map(|&i| grid.cells[i].pop).sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateArea(area_id));
            }
            let entries = cells
                .into_iter()
                .map(|i| (i, grid.cells[i].pop / total))
                .collect();
            Ok(AreaWeights { area_id, entries })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregationWeights { level, areas })
}
