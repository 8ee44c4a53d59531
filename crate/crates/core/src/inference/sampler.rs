use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::McmcConfig;
use super::diagnostics::diagnostics;
use super::posterior::{PosteriorDraws, Standardization};
use super::problem::{Approx, Latent, Problem};
use crate::coverage_models::ModelSpec;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};
use crate::spatial_field::Lattice;
use crate::survey_data::ClusterObservation;

/// Latent moves per iteration.
const LATENT_MOVES: usize = 2;
const THETA_TARGET: f64 = 0.3;
const LATENT_TARGET: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Multiplier on the log-likelihood; `0` samples the prior.
    pub likelihood_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { likelihood_weight: 1.0 }
    }
}

pub fn fit(
    spec: &ModelSpec,
    data: &[ClusterObservation],
    lattice: &Lattice,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    fit_with(spec, data, lattice, mcmc, FitOptions::default())
}

/// Clusters sorted by id; duplicate ids are rejected.
pub(crate) fn canonical_clusters(data: &[ClusterObservation]) -> Result<Vec<ClusterObservation>> {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    let mut seen = BTreeSet::new();
    for c in &sorted {
        if !seen.insert(c.cluster_id.as_str()) {
            return Err(Error::Validation(format!("duplicate cluster_id `{}`", c.cluster_id)));
        }
    }
    Ok(sorted)
}

/// SHA-256 over a canonical text rendering of the clusters.
pub(crate) fn data_digest(sorted: &[ClusterObservation]) -> String {
    let mut h = Sha256::new();
    for c in sorted {
        let covs: Vec<String> = c.covariates.iter().map(|v| format!("{v:?}")).collect();
        h.update(format!(
            "{}|{:?}|{:?}|{}|{}|{}|{}|{}|{}\n",
            c.cluster_id,
            c.lon,
            c.lat,
            c.state_id,
            c.lga_id.as_deref().unwrap_or(""),
            u8::from(c.urban),
            c.n,
            c.y,
            covs.join(",")
        ));
    }
    hex::encode(h.finalize())
}

pub fn fit_with(
    spec: &ModelSpec,
    data: &[ClusterObservation],
    lattice: &Lattice,
    mcmc: &McmcConfig,
    options: FitOptions,
) -> Result<PosteriorDraws> {
    mcmc.validate()?;
    spec.priors.validate()?;
    if data.len() < 2 {
        return Err(Error::Validation(format!("at least 2 clusters are required, got {}", data.len())));
    }
    if !(options.likelihood_weight >= 0.0) {
        return Err(Error::Validation("likelihood weight must be non-negative".into()));
    }
    let sorted = canonical_clusters(data)?;
    let standardization = Standardization::from_clusters(&sorted, spec.covariate_names.len());
    let problem = Problem::new(spec, &sorted, lattice, standardization.clone(), options.likelihood_weight)?;

    let chains: Vec<ChainOutput> = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(&problem, mcmc, c))
        .collect::<Result<_>>()?;

    let per = mcmc.draws_per_chain();
    let total = per * mcmc.chains;
    let nn = problem.n_nodes();
    let nc = problem.n_clusters();
    let n_cov = spec.covariate_names.len();
    let mut alpha = Vec::with_capacity(total);
    let mut beta = Array2::zeros((total, n_cov));
    let mut gamma = spec.include_strata.then(|| Vec::with_capacity(total));
    let mut rho = Vec::with_capacity(total);
    let mut sigma_s = Vec::with_capacity(total);
    let mut d = spec.class.has_dispersion().then(|| Vec::with_capacity(total));
    let mut sigma_nugget = spec.class.has_nugget().then(|| Vec::with_capacity(total));
    let mut field = Array2::zeros((total, nn));
    let mut nuggets = spec.class.has_nugget().then(|| Array2::zeros((total, nc)));

    let mut m = 0;
    for chain in &chains {
        for (theta, z) in chain.thetas.iter().zip(&chain.latents) {
            rho.push(theta[0].exp());
            sigma_s.push(theta[1].exp());
            if let Some(v) = d.as_mut() {
                v.push(theta[2].exp());
            }
            if let Some(v) = sigma_nugget.as_mut() {
                v.push(theta[2].exp());
            }
            let b = &z.x[nn..];
            let (a, braw) = standardization.to_raw(b[0], &b[1..1 + n_cov]);
            alpha.push(a);
            beta.row_mut(m).assign(&ndarray::ArrayView1::from(&braw));
            if let Some(g) = gamma.as_mut() {
                g.push(b[1 + n_cov]);
            }
            field.row_mut(m).assign(&ndarray::ArrayView1::from(&z.x[..nn]));
            if let Some(nm) = nuggets.as_mut() {
                nm.row_mut(m).assign(&ndarray::ArrayView1::from(&z.nugget));
            }
            m += 1;
        }
    }

    let mut draws = PosteriorDraws {
        spec: spec.clone(),
        lattice: *lattice,
        mcmc: mcmc.clone(),
        standardization,
        cluster_ids: sorted.iter().map(|c| c.cluster_id.clone()).collect(),
        data_digest: data_digest(&sorted),
        chains: mcmc.chains,
        alpha,
        beta,
        gamma,
        rho,
        sigma_s,
        d,
        sigma_nugget,
        field,
        nuggets,
        diagnostics: super::diagnostics::DiagnosticsReport {
            status: super::diagnostics::ConvergenceStatus::EssOnly,
            monitors: Vec::new(),
        },
    };
    draws.diagnostics = diagnostics(&draws);
    Ok(draws)
}

struct ChainOutput {
    thetas: Vec<Vec<f64>>,
    latents: Vec<Latent>,
}

/// Chain state in whitened coordinates: `ζ ~ N(0, I)` under the Gaussian
/// approximation at the current hyperparameters.
struct State {
    theta: Vec<f64>,
    zeta: Vec<f64>,
    approx: Approx,
    z: Latent,
    /// `log π(θ, z) − log q_θ(z)`.
    weight: f64,
}

fn evaluate(problem: &Problem, theta: &[f64], zeta: &[f64], approx: Approx) -> State {
    let z = problem.unwhiten(&approx, zeta);
    let weight = problem.log_post(theta, &z) - problem.log_q_whitened(&approx, zeta);
    State {
        theta: theta.to_vec(),
        zeta: zeta.to_vec(),
        approx,
        z,
        weight,
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn run_chain(problem: &Problem, mcmc: &McmcConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = rng_for(mcmc.seed, Stream::Chain, chain as u64);
    let dim = problem.theta_dim();
    let prior = problem.theta_prior();
    let zeta_dim = problem.n_nodes() + problem.p + if problem.class.has_nugget() { problem.n_clusters() } else { 0 };

    // Overdispersed start: hyperparameters jittered around the prior centre.
    let theta0: Vec<f64> = prior
        .iter()
        .map(|(m, s)| m + 0.5 * s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let zero = problem.latent(
        vec![0.0; problem.n_nodes() + problem.p],
        vec![0.0; if problem.class.has_nugget() { problem.n_clusters() } else { 0 }],
    );
    let approx0 = problem.approximate(&theta0, &zero)?;
    let zeta0 = normals(&mut rng, zeta_dim);
    let mut state = evaluate(problem, &theta0, &zeta0, approx0);

    let mut log_scale = (0.1f64).ln();
    let mut chol: Vec<f64> = identity(dim);
    let mut hist_mean = vec![0.0; dim];
    let mut hist_cov = vec![0.0; dim * dim];
    let mut hist_n = 0.0;
    let mut pcn_logit = 0.0f64;
    let mut empirical = false;

    let per = mcmc.draws_per_chain();
    let mut thetas = Vec::with_capacity(per);
    let mut latents = Vec::with_capacity(per);

    for iter in 0..mcmc.iterations {
        let adapting = iter < mcmc.burn_in;

        // Hyperparameter move with ζ held fixed.
        let xi = normals(&mut rng, dim);
        let scale = log_scale.exp();
        let mut prop = state.theta.clone();
        for i in 0..dim {
            for j in 0..=i {
                prop[i] += scale * chol[i * dim + j] * xi[j];
            }
        }
        let u: f64 = rng.random();
        let accepted_theta = match problem.approximate(&prop, &state.approx.mode) {
            Ok(a) => {
                let cand = evaluate(problem, &prop, &state.zeta, a);
                let log_ratio = cand.weight - state.weight;
                if log_ratio.is_finite() && u.ln() < log_ratio {
                    state = cand;
                    true
                } else {
                    false
                }
            }
            Err(_) => false,
        };

        // Crank–Nicolson moves of ζ, reversible with respect to N(0, I).
        let beta = 1.0 / (1.0 + (-pcn_logit).exp());
        let keep = (1.0 - beta * beta).sqrt();
        let mut latent_acc = 0.0;
        for _ in 0..LATENT_MOVES {
            let noise = normals(&mut rng, zeta_dim);
            let zeta: Vec<f64> = state.zeta.iter().zip(&noise).map(|(z, e)| keep * z + beta * e).collect();
            let z = problem.unwhiten(&state.approx, &zeta);
            let weight = problem.log_post(&state.theta, &z) - problem.log_q_whitened(&state.approx, &zeta);
            let u: f64 = rng.random();
            let log_ratio = weight - state.weight;
            if log_ratio.is_finite() && u.ln() < log_ratio {
                state.zeta = zeta;
                state.z = z;
                state.weight = weight;
                latent_acc += 1.0;
            }
        }

        if adapting {
            let rate = 1.0 / ((iter + 1) as f64).powf(0.6);
            let a = if accepted_theta { 1.0 } else { 0.0 };
            log_scale += rate * 3.0 * (a - THETA_TARGET);
            pcn_logit += rate * 3.0 * (latent_acc / LATENT_MOVES as f64 - LATENT_TARGET);
            pcn_logit = pcn_logit.clamp(-8.0, 8.0);

            if iter >= mcmc.burn_in / 8 {
                hist_n += 1.0;
                let delta: Vec<f64> = state.theta.iter().zip(&hist_mean).map(|(t, m)| t - m).collect();
                for i in 0..dim {
                    hist_mean[i] += delta[i] / hist_n;
                }
                for i in 0..dim {
                    for j in 0..dim {
                        hist_cov[i * dim + j] += delta[i] * (state.theta[j] - hist_mean[j]);
                    }
                }
            }
            let switch = mcmc.burn_in / 4;
            if iter >= switch && (iter - switch) % 100 == 0 && hist_n > 2.0 * dim as f64 {
                let mut cov: Vec<f64> = hist_cov.iter().map(|v| v / (hist_n - 1.0)).collect();
                for i in 0..dim {
                    cov[i * dim + i] += 1e-6;
                }
                if let Some(l) = dense_chol(&cov, dim) {
                    if !empirical {
                        log_scale = (2.38 / (dim as f64).sqrt()).ln();
                        empirical = true;
                    }
                    chol = l;
                }
            }
        } else if (iter - mcmc.burn_in + 1) % mcmc.thin == 0 && thetas.len() < per {
            thetas.push(state.theta.clone());
            latents.push(state.z.clone());
        }
    }
    Ok(ChainOutput { thetas, latents })
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn dense_chol(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}
