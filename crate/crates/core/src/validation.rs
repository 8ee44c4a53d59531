//! WAIC and leave-one-state-out cross-validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coverage_models::{
    betabinomial_kernel, binomial_kernel, lono_target, ts_target, linear_predictor, ModelClass, ModelSpec,
};
use crate::error::{Error, Result};
use crate::inference::{fit, ConvergenceStatus, McmcConfig, PosteriorDraws};
use crate::linalg::GaussHermite;
use crate::rng::{derive, rng_for, Stream};
use crate::spatial_field::{project, Lattice};
use crate::stats::{expit, ln_choose, log_sum_exp, mean, quantile_sorted, sample_var, sorted_copy};
use crate::survey_data::ClusterObservation;

/// Quadrature nodes used to integrate the cluster nugget out of the
/// pointwise likelihood.
pub const NUGGET_QUADRATURE_NODES: usize = 32;

/// Linear predictor (without nugget) for every draw and cluster: `M × C`.
fn cluster_eta(draws: &PosteriorDraws, data: &[ClusterObservation]) -> Result<Array2<f64>> {
    let points: Vec<(f64, f64)> = data.iter().map(|c| (c.lon, c.lat)).collect();
    let proj = project(&draws.lattice, &points)?;
    let m = draws.len();
    let mut eta = Array2::zeros((m, data.len()));
    for k in 0..m {
        let p = draws.param(k);
        for (c, obs) in data.iter().enumerate() {
            let s = proj.apply_row(c, &p.field);
            eta[[k, c]] = linear_predictor(&p, &obs.covariates, obs.urban, s)?;
        }
    }
    Ok(eta)
}

/// Pointwise log-likelihood `ll[m, c]`. Nugget classes integrate the
/// nugget out with Gauss–Hermite quadrature.
pub fn pointwise_loglik(draws: &PosteriorDraws, data: &[ClusterObservation]) -> Result<Array2<f64>> {
    let eta = cluster_eta(draws, data)?;
    let class = draws.spec.class;
    let rule = GaussHermite::new(NUGGET_QUADRATURE_NODES).normal_log_rule();
    let consts: Vec<f64> = data.iter().map(|c| ln_choose(c.n, c.y)).collect();
    let mut ll = Array2::zeros(eta.dim());
    let mut terms = vec![0.0; rule.len()];
    for ((m, c), v) in ll.indexed_iter_mut() {
        let e = eta[[m, c]];
        let (y, n) = (data[c].y, data[c].n);
        let kernel = match class {
            ModelClass::BinomialNn => binomial_kernel(y, n, e),
            ModelClass::BetaBinomialOd => {
                let d = draws.d.as_ref().expect("beta-binomial draws carry d")[m];
                betabinomial_kernel(y, n, expit(e), d)
            }
            ModelClass::LonoBinomialOd | ModelClass::BinomialTs => {
                let s = draws.sigma_nugget.as_ref().expect("nugget draws carry sigma")[m];
                for (t, (z, lw)) in terms.iter_mut().zip(&rule) {
                    *t = lw + binomial_kernel(y, n, e + s * z);
                }
                log_sum_exp(&terms)
            }
        };
        *v = consts[c] + kernel;
    }
    Ok(ll)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// WAIC from an `M × C` pointwise log-likelihood matrix.
pub fn waic_from_loglik(ll: &Array2<f64>, cluster_ids: &[String]) -> Result<Waic> {
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let m = ll.nrows() as f64;
    for (c, col) in ll.columns().into_iter().enumerate() {
        let v = col.to_vec();
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            let id = cluster_ids.get(c).map_or_else(|| c.to_string(), Clone::clone);
            return Err(Error::Numeric(format!(
                "non-finite pointwise log-likelihood {bad} for cluster `{id}`"
            )));
        }
        lppd += log_sum_exp(&v) - m.ln();
        p_waic += sample_var(&v);
    }
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
    })
}

/// WAIC of a fit on `data`.
pub fn waic(draws: &PosteriorDraws, data: &[ClusterObservation]) -> Result<Waic> {
    let ll = pointwise_loglik(draws, data)?;
    let ids: Vec<String> = data.iter().map(|c| c.cluster_id.clone()).collect();
    waic_from_loglik(&ll, &ids)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub bias: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Bias, MAE and RMSE of prediction errors, each cluster weighted equally.
pub fn metrics(errors: &[f64]) -> Metrics {
    if errors.is_empty() {
        return Metrics {
            n: 0,
            bias: f64::NAN,
            mae: f64::NAN,
            rmse: f64::NAN,
        };
    }
    Metrics {
        n: errors.len(),
        bias: mean(errors),
        mae: errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64,
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt(),
    }
}

/// `prediction − y/n` per cluster.
pub fn prediction_errors(predictions: &[f64], data: &[ClusterObservation]) -> Vec<f64> {
    predictions.iter().zip(data).map(|(p, c)| p - c.fraction()).collect()
}

/// Posterior median of the class target at each cluster. `BinomialTs`
/// nuggets are drawn from a stream keyed by cluster position.
pub fn predict_clusters(draws: &PosteriorDraws, data: &[ClusterObservation], seed: u64) -> Result<Vec<f64>> {
    let eta = cluster_eta(draws, data)?;
    let class = draws.spec.class;
    let mut out = Vec::with_capacity(data.len());
    for c in 0..data.len() {
        let mut rng = rng_for(seed, Stream::Prediction, c as u64);
        let targets: Vec<f64> = (0..draws.len())
            .map(|m| {
                let e = eta[[m, c]];
                match class {
                    ModelClass::BinomialNn | ModelClass::BetaBinomialOd => expit(e),
                    ModelClass::LonoBinomialOd => {
                        lono_target(e, draws.sigma_nugget.as_ref().expect("nugget draws")[m])
                    }
                    ModelClass::BinomialTs => {
                        let s = draws.sigma_nugget.as_ref().expect("nugget draws")[m];
                        ts_target(e, s * rng.sample::<f64, _>(StandardNormal))
                    }
                }
            })
            .collect();
        out.push(quantile_sorted(&sorted_copy(&targets), 0.5));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub state: String,
    pub metrics: Metrics,
    pub status: ConvergenceStatus,
    /// Per held-out cluster: `(cluster_id, prediction, observed fraction)`.
    pub predictions: Vec<(String, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub class: ModelClass,
    pub include_strata: bool,
    pub waic: Option<Waic>,
    pub folds: Vec<FoldResult>,
    pub pooled: Metrics,
    /// True when any fold's fit failed the convergence check.
    pub any_fold_failed: bool,
}

/// Leave-one-state-out cross-validation. Each fold refits on the other
/// states with a seed derived from the base seed and the fold index.
pub fn loso_cv(
    spec: &ModelSpec,
    data: &[ClusterObservation],
    lattice: &Lattice,
    mcmc: &McmcConfig,
) -> Result<ValidationReport> {
    let mut by_state: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in data.iter().enumerate() {
        by_state.entry(c.state_id.as_str()).or_default().push(i);
    }
    if by_state.len() < 2 {
        return Err(Error::Validation(format!(
            "cross-validation needs at least 2 states, found {}",
            by_state.len()
        )));
    }
    let folds: Vec<(&str, Vec<usize>)> = by_state.into_iter().collect();
    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (state, held))| {
            let train: Vec<ClusterObservation> = data
                .iter()
                .filter(|c| c.state_id != *state)
                .cloned()
                .collect();
            let test: Vec<ClusterObservation> = held.iter().map(|&i| data[i].clone()).collect();
            let fold_mcmc = McmcConfig {
                seed: derive(mcmc.seed, Stream::Fold, f as u64),
                ..mcmc.clone()
            };
            let draws = fit(spec, &train, lattice, &fold_mcmc)?;
            let preds = predict_clusters(&draws, &test, fold_mcmc.seed)?;
            let errors = prediction_errors(&preds, &test);
            Ok(FoldResult {
                state: state.to_string(),
                metrics: metrics(&errors),
                status: draws.diagnostics.status,
                predictions: test
                    .iter()
                    .zip(&preds)
                    .map(|(c, p)| (c.cluster_id.clone(), *p, c.fraction()))
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    let all_errors: Vec<f64> = results
        .iter()
        .flat_map(|f| f.predictions.iter().map(|(_, p, o)| p - o))
        .collect();
    Ok(ValidationReport {
        class: spec.class,
        include_strata: spec.include_strata,
        waic: None,
        pooled: metrics(&all_errors),
        any_fold_failed: results.iter().any(|f| f.status == ConvergenceStatus::Failed),
        folds: results,
    })
}

/// Full-data WAIC plus leave-one-state-out metrics.
pub fn validate(
    spec: &ModelSpec,
    data: &[ClusterObservation],
    lattice: &Lattice,
    mcmc: &McmcConfig,
    cv_mcmc: &McmcConfig,
) -> Result<ValidationReport> {
    let draws = fit(spec, data, lattice, mcmc)?;
    let w = waic(&draws, data)?;
    let mut report = loso_cv(spec, data, lattice, cv_mcmc)?;
    report.waic = Some(w);
    Ok(report)
}

/// `fold,state,n,bias,mae,rmse,status`, folds first, then a `pooled` row.
pub fn write_report_csv(path: impl AsRef<Path>, report: &ValidationReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "state", "n", "bias", "mae", "rmse", "status"])?;
    let status = |s: ConvergenceStatus| match s {
        ConvergenceStatus::Converged => "converged",
        ConvergenceStatus::Failed => "failed",
        ConvergenceStatus::EssOnly => "ess_only",
    };
    for (i, f) in report.folds.iter().enumerate() {
        let m = f.metrics;
        w.write_record([
            (i + 1).to_string(),
            f.state.clone(),
            m.n.to_string(),
            m.bias.to_string(),
            m.mae.to_string(),
            m.rmse.to_string(),
            status(f.status).to_string(),
        ])?;
    }
    let m = report.pooled;
    w.write_record([
        "pooled".to_string(),
        String::new(),
        m.n.to_string(),
        m.bias.to_string(),
        m.mae.to_string(),
        m.rmse.to_string(),
        if report.any_fold_failed { "failed" } else { "converged" }.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn report_text(report: &ValidationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "model: {} ({} strata)",
        report.class,
        if report.include_strata { "with" } else { "without" }
    );
    match report.waic {
        Some(w) => {
            let _ = writeln!(s, "WAIC: {:.3} (lppd {:.3}, p_waic {:.3})", w.waic, w.lppd, w.p_waic);
        }
        None => {
            let _ = writeln!(s, "WAIC: not computed");
        }
    }
    let m = report.pooled;
    let _ = writeln!(
        s,
        "leave-one-state-out over {} folds, {} clusters: bias {:.4}, MAE {:.4}, RMSE {:.4}",
        report.folds.len(),
        m.n,
        m.bias,
        m.mae,
        m.rmse
    );
    let failed: Vec<&str> = report
        .folds
        .iter()
        .filter(|f| f.status == ConvergenceStatus::Failed)
        .map(|f| f.state.as_str())
        .collect();
    if failed.is_empty() {
        let _ = writeln!(s, "all folds converged");
    } else {
        let _ = writeln!(s, "folds with failed convergence: {}", failed.join(", "));
    }
    s
}

pub fn write_report_text(path: impl AsRef<Path>, report: &ValidationReport) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_text(report)).map_err(|e| Error::io(path, e))
}
