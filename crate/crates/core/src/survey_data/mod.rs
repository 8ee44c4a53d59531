//! Cluster observations, gridded population context and the
//! population-proportional weights used for area aggregation.

mod clusters;
mod grid;
mod raster;
mod weights;

pub use clusters::{load_clusters, save_clusters, BoundingBox, ClusterObservation};
pub use grid::{load_population_grid, save_population_grid, AreaId, GridCell, GridPaths, PopulationGrid};
pub use raster::{read_ascii_grid, write_ascii_grid, AsciiGrid, RasterGeometry};
pub use weights::{aggregation_weights, AggregationWeights, AreaWeights, Level};
