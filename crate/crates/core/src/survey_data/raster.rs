use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice geometry shared by a set of aligned rasters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterGeometry {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
}

impl RasterGeometry {
    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Centre of the cell in raster row `row` (row 0 is the northern edge).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xllcorner + (col as f64 + 0.5) * self.cellsize;
        let y = self.yllcorner + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize;
        (x, y)
    }
}

impl fmt::Display for RasterGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} @ ({}, {}) step {}",
            self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize
        )
    }
}

/// ESRI ASCII grid; `values` are row-major from the northern row,
/// with `None` for NODATA.
#[derive(Clone, Debug, PartialEq)]
pub struct AsciiGrid {
    pub geometry: RasterGeometry,
    pub nodata: f64,
    pub values: Vec<Option<f64>>,
}

impl AsciiGrid {
    pub fn new(geometry: RasterGeometry, values: Vec<Option<f64>>) -> Self {
        assert_eq!(values.len(), geometry.len());
        Self {
            geometry,
            nodata: -9999.0,
            values,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.geometry.ncols + col]
    }
}

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<AsciiGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = text.split_ascii_whitespace();
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

    let mut header = |key: &str| -> Result<f64> {
        let k = tokens
            .next()
            .ok_or_else(|| bad(format!("missing header `{key}`")))?;
        if !k.eq_ignore_ascii_case(key) {
            return Err(bad(format!("expected header `{key}`, found `{k}`")));
        }
        let v = tokens
            .next()
            .ok_or_else(|| bad(format!("missing value for `{key}`")))?;
        v.parse::<f64>()
            .map_err(|_| bad(format!("bad value `{v}` for `{key}`")))
    };
    let ncols = header("ncols")? as usize;
    let nrows = header("nrows")? as usize;
    let xllcorner = header("xllcorner")?;
    let yllcorner = header("yllcorner")?;
    let cellsize = header("cellsize")?;
    let nodata = header("NODATA_value")?;
    if !(cellsize > 0.0) {
        return Err(bad(format!("cellsize must be positive, got {cellsize}")));
    }
    let geometry = RasterGeometry {
        ncols,
        nrows,
        xllcorner,
        yllcorner,
        cellsize,
    };
    let mut values = Vec::with_capacity(geometry.len());
    for t in tokens {
        let v = t
            .parse::<f64>()
            .map_err(|_| bad(format!("bad cell value `{t}`")))?;
        values.push(if v == nodata { None } else { Some(v) });
    }
    if values.len() != geometry.len() {
        return Err(bad(format!(
            "expected {} cell values, found {}",
            geometry.len(),
            values.len()
        )));
    }
    Ok(AsciiGrid {
        geometry,
        nodata,
        values,
    })
}

pub fn write_ascii_grid(path: impl AsRef<Path>, grid: &AsciiGrid) -> Result<()> {
    let path = path.as_ref();
    let g = &grid.geometry;
    let mut out = String::new();
    out.push_str(&format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        g.ncols, g.nrows, g.xllcorner, g.yllcorner, g.cellsize, grid.nodata
    ));
    for r in 0..g.nrows {
        let row: Vec<String> = (0..g.ncols)
            .map(|c| match grid.values[r * g.ncols + c] {
                Some(v) => v.to_string(),
                None => grid.nodata.to_string(),
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
