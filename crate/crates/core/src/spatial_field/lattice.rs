use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey_data::BoundingBox;

pub const DEFAULT_SPACING: f64 = 0.25;
pub const DEFAULT_NODE_CAP: usize = 50_000;

/// Regular lattice of field nodes. Node `(row, col)` sits at
/// `origin + (col, row) * spacing` and has index `row * ncols + col`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub spacing: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl Lattice {
    pub fn node_count(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn node(&self, idx: usize) -> (f64, f64) {
        let (row, col) = (idx / self.ncols, idx % self.ncols);
        (
            self.origin_lon + col as f64 * self.spacing,
            self.origin_lat + row as f64 * self.spacing,
        )
    }

    pub fn max_lon(&self) -> f64 {
        self.origin_lon + (self.ncols - 1) as f64 * self.spacing
    }

    pub fn max_lat(&self) -> f64 {
        self.origin_lat + (self.nrows - 1) as f64 * self.spacing
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.origin_lon && lon <= self.max_lon() && lat >= self.origin_lat && lat <= self.max_lat()
    }
}

/// Lattice covering `data_bbox` grown by `padding` on every side.
pub fn build_lattice(data_bbox: &BoundingBox, spacing: f64, padding: f64, node_cap: usize) -> Result<Lattice> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Domain(format!("lattice spacing must be positive, got {spacing}")));
    }
    if !(padding >= 0.0) {
        return Err(Error::Domain(format!("padding must be non-negative, got {padding}")));
    }
    let steps = |extent: f64| -> usize {
        let s = extent / spacing;
        // tolerate round-off when the extent is an exact multiple of the spacing
        (s - 1e-9).ceil().max(0.0) as usize + 1
    };
    let width = data_bbox.max_lon - data_bbox.min_lon + 2.0 * padding;
    let height = data_bbox.max_lat - data_bbox.min_lat + 2.0 * padding;
    let ncols = steps(width).max(2);
    let nrows = steps(height).max(2);
    let nodes = ncols.saturating_mul(nrows);
    if nodes > node_cap {
        return Err(Error::Resource(format!(
            "lattice of {ncols}x{nrows} = {nodes} nodes exceeds the cap of {node_cap}; use a coarser spacing"
        )));
    }
    Ok(Lattice {
        origin_lon: data_bbox.min_lon - padding,
        origin_lat: data_bbox.min_lat - padding,
        spacing,
        ncols,
        nrows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoundingBox {
        BoundingBox::new(0.0, 0.0, 1.0, 1.0)
    }

    #[test]
    fn unit_box_half_spacing() {
        let l = build_lattice(&unit(), 0.5, 0.0, DEFAULT_NODE_CAP).unwrap();
        assert_eq!((l.ncols, l.nrows), (3, 3));
        let l = build_lattice(&unit(), 0.5, 0.5, DEFAULT_NODE_CAP).unwrap();
        assert_eq!((l.ncols, l.nrows), (5, 5));
        assert_eq!(l.node_count(), 25);
    }

    #[test]
    fn nigeria_like_extent() {
        let b = BoundingBox::new(3.0, 4.0, 15.0, 14.0);
        let l = build_lattice(&b, 0.25, 3.0, DEFAULT_NODE_CAP).unwrap();
        assert_eq!((l.ncols, l.nrows), (73, 65));
        assert!(l.contains(0.0, 1.0) && l.contains(18.0, 17.0));
    }

    #[test]
    fn cap_is_a_resource_error() {
        let b = BoundingBox::new(0.0, 0.0, 100.0, 100.0);
        assert!(matches!(
            build_lattice(&b, 0.1, 0.0, DEFAULT_NODE_CAP),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn bad_spacing_rejected() {
        assert!(build_lattice(&unit(), 0.0, 0.0, 10).is_err());
        assert!(build_lattice(&unit(), 0.5, -1.0, 10).is_err());
    }
}
