use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use crate::error::{Error, Result};

/// Row-stochastic bilinear map from query points to lattice nodes (CSR).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    row_ptr: Vec<usize>,
    nodes: Vec<usize>,
    weights: Vec<f64>,
}

impl Projector {
    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Nonzero `(node, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.nodes[a..b].iter().copied().zip(self.weights[a..b].iter().copied())
    }

    /// Interpolated field value at query point `i`.
    pub fn apply_row(&self, i: usize, field: &[f64]) -> f64 {
        self.row(i).map(|(k, w)| w * field[k]).sum()
    }

    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|i| self.apply_row(i, field)).collect()
    }
}

/// Bilinear weights from each point's enclosing lattice cell.
pub fn project(lattice: &Lattice, points: &[(f64, f64)]) -> Result<Projector> {
    let mut row_ptr = Vec::with_capacity(points.len() + 1);
    let mut nodes = Vec::with_capacity(points.len() * 4);
    let mut weights = Vec::with_capacity(points.len() * 4);
    row_ptr.push(0);
    for (index, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() || !lattice.contains(x, y) {
            return Err(Error::OutOfDomain { index, x, y });
        }
        let fx = (x - lattice.origin_lon) / lattice.spacing;
        let fy = (y - lattice.origin_lat) / lattice.spacing;
        let c0 = (fx.floor() as usize).min(lattice.ncols - 2);
        let r0 = (fy.floor() as usize).min(lattice.nrows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let corners = [
            (lattice.index(r0, c0), (1.0 - tx) * (1.0 - ty)),
            (lattice.index(r0, c0 + 1), tx * (1.0 - ty)),
            (lattice.index(r0 + 1, c0), (1.0 - tx) * ty),
            (lattice.index(r0 + 1, c0 + 1), tx * ty),
        ];
        for (k, w) in corners {
            if w > 0.0 {
                nodes.push(k);
                weights.push(w);
            }
        }
        row_ptr.push(nodes.len());
    }
    Ok(Projector {
        row_ptr,
        nodes,
        weights,
    })
}
