use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned lon/lat box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Self {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        }
    }

    pub fn world() -> Self {
        Self::new(-180.0, -90.0, 180.0, 90.0)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    /// Smallest box holding all points; `None` for an empty iterator.
    pub fn enclosing(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (x, y) = it.next()?;
        let mut b = Self::new(x, y, x, y);
        for (x, y) in it {
            b.min_lon = b.min_lon.min(x);
            b.max_lon = b.max_lon.max(x);
            b.min_lat = b.min_lat.min(y);
            b.max_lat = b.max_lat.max(y);
        }
        Some(b)
    }

    pub fn diameter(&self) -> f64 {
        (self.max_lon - self.min_lon).hypot(self.max_lat - self.min_lat)
    }
}

/// One surveyed cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterObservation {
    pub cluster_id: String,
    pub lon: f64,
    pub lat: f64,
    pub state_id: String,
    pub lga_id: Option<String>,
    pub urban: bool,
    pub n: u32,
    pub y: u32,
    pub covariates: Vec<f64>,
}

impl ClusterObservation {
    pub fn fraction(&self) -> f64 {
        self.y as f64 / self.n as f64
    }

    pub(crate) fn validate(&self, row: usize, bbox: &BoundingBox) -> Result<()> {
        let fail = |message: String| Err(Error::Row { row, message });
        if self.n == 0 {
            return fail(format!("cluster `{}` has n = 0", self.cluster_id));
        }
        if self.y > self.n {
            return fail(format!(
                "cluster `{}` has y = {} > n = {}",
                self.cluster_id, self.y, self.n
            ));
        }
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return fail(format!("cluster `{}` has non-finite coordinates", self.cluster_id));
        }
        if !bbox.contains(self.lon, self.lat) {
            return fail(format!(
                "cluster `{}` at ({}, {}) lies outside the study area",
                self.cluster_id, self.lon, self.lat
            ));
        }
        if let Some(k) = self.covariates.iter().position(|v| !v.is_finite()) {
            return fail(format!(
                "cluster `{}` has a non-finite value in covariate {k}",
                self.cluster_id
            ));
        }
        Ok(())
    }
}

const REQUIRED: [&str; 8] = ["cluster_id", "lon", "lat", "state_id", "lga_id", "urban", "n", "y"];

/// Reads a cluster CSV. Rows are numbered from 1 (the header is row 0).
pub fn load_clusters(
    path: impl AsRef<Path>,
    covariate_names: &[String],
    study_area: Option<&BoundingBox>,
) -> Result<Vec<ClusterObservation>> {
    let path = path.as_ref();
    let bbox = study_area.copied().unwrap_or_else(BoundingBox::world);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let mut idx = [0usize; 8];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name)?;
    }
    let cov_idx = covariate_names
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize, what: &str| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| Error::Row {
                row,
                message: format!("cannot parse {what} `{}`", field(k)),
            })
        };
        let count = |k: usize, what: &str| -> Result<u32> {
            field(k).parse::<u32>().map_err(|_| Error::Row {
                row,
                message: format!("cannot parse {what} `{}` as a count", field(k)),
            })
        };
        let urban = match field(idx[5]) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Row {
                    row,
                    message: format!("urban must be 0 or 1, got `{other}`"),
                })
            }
        };
        let lga = field(idx[4]);
        let obs = ClusterObservation {
            cluster_id: field(idx[0]).to_string(),
            lon: num(idx[1], "lon")?,
            lat: num(idx[2], "lat")?,
            state_id: field(idx[3]).to_string(),
            lga_id: (!lga.is_empty()).then(|| lga.to_string()),
            urban,
            n: count(idx[6], "n")?,
            y: count(idx[7], "y")?,
            covariates: cov_idx
                .iter()
                .zip(covariate_names)
                .map(|(&k, name)| num(k, name))
                .collect::<Result<Vec<_>>>()?,
        };
        obs.validate(row, &bbox)?;
        out.push(obs);
    }
    Ok(out)
}

/// Writes clusters in the format read by [`load_clusters`].
pub fn save_clusters(
    path: impl AsRef<Path>,
    clusters: &[ClusterObservation],
    covariate_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(covariate_names.iter().map(String::as_str));
    w.write_record(&header)?;
    for c in clusters {
        if c.covariates.len() != covariate_names.len() {
            return Err(Error::Dimension(format!(
                "cluster `{}` has {} covariates, expected {}",
                c.cluster_id,
                c.covariates.len(),
                covariate_names.len()
            )));
        }
        let mut rec = vec![
            c.cluster_id.clone(),
            c.lon.to_string(),
            c.lat.to_string(),
            c.state_id.clone(),
            c.lga_id.clone().unwrap_or_default(),
            if c.urban { "1" } else { "0" }.to_string(),
            c.n.to_string(),
            c.y.to_string(),
        ];
        rec.extend(c.covariates.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
