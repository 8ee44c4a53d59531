//! Fitted-model file: magic line `VAXFIT1`, a JSON provenance header and
//! the draw matrices as little-endian `f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::McmcConfig;
use super::diagnostics::{diagnostics, DiagnosticsReport};
use super::posterior::{PosteriorDraws, Standardization};
use crate::coverage_models::ModelSpec;
use crate::error::{Error, Result};
use crate::matrix_io::{read_header, read_matrix, write_end, write_header, write_matrix};
use crate::spatial_field::Lattice;

pub const FIT_MAGIC: &str = "VAXFIT1";

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    lattice: Lattice,
    mcmc: McmcConfig,
    standardization: Standardization,
    cluster_ids: Vec<String>,
    data_digest: String,
    chains: usize,
    draws: usize,
    diagnostics: DiagnosticsReport,
}

pub fn write_fit(path: impl AsRef<Path>, draws: &PosteriorDraws) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_fit_to(&mut w, draws).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_fit_to<W: Write>(w: &mut W, d: &PosteriorDraws) -> std::io::Result<()> {
    let header = Header {
        spec: d.spec.clone(),
        lattice: d.lattice,
        mcmc: d.mcmc.clone(),
        standardization: d.standardization.clone(),
        cluster_ids: d.cluster_ids.clone(),
        data_digest: d.data_digest.clone(),
        chains: d.chains,
        draws: d.len(),
        diagnostics: d.diagnostics.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    write_header(w, FIT_MAGIC, &json)?;
    let m = d.len();
    write_matrix(w, "alpha", m, 1, d.alpha.iter().copied())?;
    write_matrix(w, "beta", m, d.beta.ncols(), d.beta.iter().copied())?;
    if let Some(g) = &d.gamma {
        write_matrix(w, "gamma", m, 1, g.iter().copied())?;
    }
    write_matrix(w, "rho", m, 1, d.rho.iter().copied())?;
    write_matrix(w, "sigma_s", m, 1, d.sigma_s.iter().copied())?;
    if let Some(v) = &d.d {
        write_matrix(w, "d", m, 1, v.iter().copied())?;
    }
    if let Some(v) = &d.sigma_nugget {
        write_matrix(w, "sigma_nugget", m, 1, v.iter().copied())?;
    }
    write_matrix(w, "field", m, d.field.ncols(), d.field.iter().copied())?;
    if let Some(n) = &d.nuggets {
        write_matrix(w, "nuggets", m, n.ncols(), n.iter().copied())?;
    }
    write_end(w)
}

pub fn read_fit(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let json = read_header(&mut r, FIT_MAGIC)?;
    let h: Header = serde_json::from_slice(&json)?;
    let mut mats = BTreeMap::new();
    while let Some(mat) = read_matrix(&mut r)? {
        if mat.rows != h.draws {
            return Err(Error::Format(format!(
                "matrix `{}` has {} rows, header declares {} draws",
                mat.name, mat.rows, h.draws
            )));
        }
        mats.insert(mat.name.clone(), mat);
    }
    let take_vec = |name: &str| -> Option<Vec<f64>> { mats.get(name).map(|m| m.data.clone()) };
    let need = |v: Option<Vec<f64>>, name: &str| v.ok_or_else(|| Error::Format(format!("missing matrix `{name}`")));
    let alpha = need(take_vec("alpha"), "alpha")?;
    let rho = need(take_vec("rho"), "rho")?;
    let sigma_s = need(take_vec("sigma_s"), "sigma_s")?;
    let gamma = take_vec("gamma");
    let d = take_vec("d");
    let sigma_nugget = take_vec("sigma_nugget");
    let as2 = |name: &str| -> Result<Option<Array2<f64>>> {
        match mats.get(name) {
            None => Ok(None),
            Some(m) => Array2::from_shape_vec((m.rows, m.cols), m.data.clone())
                .map(Some)
                .map_err(|e| Error::Format(format!("matrix `{name}`: {e}"))),
        }
    };
    let beta = as2("beta")?.ok_or_else(|| Error::Format("missing matrix `beta`".into()))?;
    let field = as2("field")?.ok_or_else(|| Error::Format("missing matrix `field`".into()))?;
    let nuggets = as2("nuggets")?;
    if field.ncols() != h.lattice.node_count() {
        return Err(Error::Format("field width does not match lattice".into()));
    }
    if h.spec.include_strata != gamma.is_some()
        || h.spec.class.has_dispersion() != d.is_some()
        || h.spec.class.has_nugget() != sigma_nugget.is_some()
        || h.spec.class.has_nugget() != nuggets.is_some()
    {
        return Err(Error::Format("draw matrices do not match the model class".into()));
    }
    let mut draws = PosteriorDraws {
        spec: h.spec,
        lattice: h.lattice,
        mcmc: h.mcmc,
        standardization: h.standardization,
        cluster_ids: h.cluster_ids,
        data_digest: h.data_digest,
        chains: h.chains,
        alpha,
        beta,
        gamma,
        rho,
        sigma_s,
        d,
        sigma_nugget,
        field,
        nuggets,
        diagnostics: h.diagnostics,
    };
    // JSON cannot carry an infinite R-hat, so recompute from the draws
    draws.diagnostics = diagnostics(&draws);
    Ok(draws)
}
