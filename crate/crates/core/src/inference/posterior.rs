use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::McmcConfig;
use super::diagnostics::DiagnosticsReport;
use crate::coverage_models::{ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::spatial_field::Lattice;
use crate::stats::{mean, sample_var};
use crate::survey_data::ClusterObservation;

/// Per-covariate centring and scaling applied inside the sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Column means and SDs of the cluster covariates. Constant columns keep
    /// unit scale.
    pub fn from_clusters(data: &[ClusterObservation], n_cov: usize) -> Self {
        let mut means = Vec::with_capacity(n_cov);
        let mut sds = Vec::with_capacity(n_cov);
        for k in 0..n_cov {
            let col: Vec<f64> = data.iter().map(|c| c.covariates[k]).collect();
            let sd = sample_var(&col).sqrt();
            means.push(mean(&col));
            sds.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Self { means, sds }
    }

    pub fn identity(n_cov: usize) -> Self {
        Self {
            means: vec![0.0; n_cov],
            sds: vec![1.0; n_cov],
        }
    }

    pub fn apply<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        x.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
    }

    pub fn to_raw(&self, alpha_s: f64, beta_s: &[f64]) -> (f64, Vec<f64>) {
        let beta: Vec<f64> = beta_s.iter().zip(&self.sds).map(|(b, s)| b / s).collect();
        let shift: f64 = beta.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (alpha_s - shift, beta)
    }

    pub fn to_standardized(&self, alpha: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let shift: f64 = beta.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        let beta_s = beta.iter().zip(&self.sds).map(|(b, s)| b * s).collect();
        (alpha + shift, beta_s)
    }
}

/// Retained joint posterior draws. Row `m` of every matrix and element `m`
/// of every vector belong to the same joint draw; chains are concatenated
/// in chain order.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub lattice: Lattice,
    pub mcmc: McmcConfig,
    pub standardization: Standardization,
    /// Cluster ids in the sampler's canonical order (sorted).
    pub cluster_ids: Vec<String>,
    /// SHA-256 of the canonical cluster data, hex encoded.
    pub data_digest: String,
    pub chains: usize,
    pub alpha: Vec<f64>,
    /// `M × n_cov`, raw covariate scale.
    pub beta: Array2<f64>,
    pub gamma: Option<Vec<f64>>,
    pub rho: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub d: Option<Vec<f64>>,
    pub sigma_nugget: Option<Vec<f64>>,
    /// `M × nodes`.
    pub field: Array2<f64>,
    /// `M × clusters`, nugget classes only.
    pub nuggets: Option<Array2<f64>>,
    pub diagnostics: DiagnosticsReport,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.len() / self.chains.max(1)
    }

    /// Joint draw `m` as a parameter vector.
    pub fn param(&self, m: usize) -> ParamVector {
        ParamVector {
            alpha: self.alpha[m],
            beta: self.beta.row(m).to_vec(),
            gamma: self.gamma.as_ref().map(|g| g[m]),
            field: self.field.row(m).to_vec(),
            rho: self.rho[m],
            sigma_s: self.sigma_s[m],
            d: self.d.as_ref().map(|d| d[m]),
            sigma_nugget: self.sigma_nugget.as_ref().map(|s| s[m]),
        }
    }

    /// Indices of `count` draws evenly spread over all retained draws.
    pub fn draw_indices(&self, count: usize) -> Result<Vec<usize>> {
        let total = self.len();
        if count == 0 {
            return Err(Error::Validation("at least one draw must be requested".into()));
        }
        if count >= total {
            return Ok((0..total).collect());
        }
        Ok((0..count).map(|i| i * total / count).collect())
    }

    /// Scalar trace by monitored name.
    pub fn scalar(&self, name: &str) -> Option<Vec<f64>> {
        match name {
            "alpha" => Some(self.alpha.clone()),
            "gamma" => self.gamma.clone(),
            "log_rho" => Some(self.rho.iter().map(|v| v.ln()).collect()),
            "log_sigma_s" => Some(self.sigma_s.iter().map(|v| v.ln()).collect()),
            "log_d" => self.d.as_ref().map(|d| d.iter().map(|v| v.ln()).collect()),
            "log_sigma_nugget" => self
                .sigma_nugget
                .as_ref()
                .map(|d| d.iter().map(|v| v.ln()).collect()),
            _ => {
                if let Some(rest) = name.strip_prefix("field_") {
                    let k: usize = rest.parse().ok()?;
                    (k < self.field.ncols()).then(|| self.field.column(k).to_vec())
                } else if let Some(rest) = name.strip_prefix("beta_") {
                    let k: usize = rest.parse().ok()?;
                    (k < self.beta.ncols()).then(|| self.beta.column(k).to_vec())
                } else {
                    None
                }
            }
        }
    }
}
