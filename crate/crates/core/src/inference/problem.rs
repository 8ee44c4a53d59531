//! Internal, sampler-facing form of a model: standardised design, cluster
//! projection, log posterior and the Gaussian approximation of the latent
//! full conditional.

use std::f64::consts::PI;

use super::posterior::Standardization;
use super::priors::PriorSpec;
use crate::coverage_models::{
    betabinomial_derivs, betabinomial_kernel, binomial_derivs, binomial_kernel, ModelClass, ModelSpec,
    ParamVector,
};
use crate::error::{Error, Result};
use crate::linalg::BorderedFactor;
use crate::spatial_field::{project, FieldHyperparams, Lattice, Projector, SpdeOperator};
use crate::stats::{ln_choose, normal_logpdf};
use crate::survey_data::ClusterObservation;

const NEWTON_TOL: f64 = 1e-4;
const NEWTON_MAX_ITER: usize = 30;
const MIN_INFO: f64 = 1e-10;

pub(crate) struct Problem {
    pub class: ModelClass,
    pub include_strata: bool,
    pub p: usize,
    pub op: SpdeOperator,
    pub proj: Projector,
    /// Row-major `C × p` standardised design (intercept first, urban last).
    pub design: Vec<f64>,
    pub y: Vec<u32>,
    pub n: Vec<u32>,
    pub ln_choose: Vec<f64>,
    pub priors: PriorSpec,
    pub data_weight: f64,
    pub standardization: Standardization,
}

/// Latent Gaussian state: `x = [field nodes, fixed effects]` plus nuggets.
#[derive(Clone, Debug)]
pub(crate) struct Latent {
    pub x: Vec<f64>,
    pub nugget: Vec<f64>,
    /// Cached `X b + P u` per cluster.
    pub eta_tilde: Vec<f64>,
}

/// Gaussian approximation of `π(x, δ | θ, y)`.
pub(crate) struct Approx {
    factor: BorderedFactor,
    mean: Vec<f64>,
    w: Vec<f64>,
    t: Vec<f64>,
    lambda: Vec<f64>,
    pub mode: Latent,
}

impl Problem {
    pub fn new(
        spec: &ModelSpec,
        data: &[ClusterObservation],
        lattice: &Lattice,
        standardization: Standardization,
        data_weight: f64,
    ) -> Result<Self> {
        let points: Vec<(f64, f64)> = data.iter().map(|c| (c.lon, c.lat)).collect();
        let proj = project(lattice, &points)?;
        let p = spec.n_fixed();
        let mut design = Vec::with_capacity(data.len() * p);
        for c in data {
            if c.covariates.len() != spec.covariate_names.len() {
                return Err(Error::Dimension(format!(
                    "cluster `{}` has {} covariates, model expects {}",
                    c.cluster_id,
                    c.covariates.len(),
                    spec.covariate_names.len()
                )));
            }
            design.push(1.0);
            design.extend(standardization.apply(&c.covariates));
            if spec.include_strata {
                design.push(if c.urban { 1.0 } else { 0.0 });
            }
        }
        Ok(Self {
            class: spec.class,
            include_strata: spec.include_strata,
            p,
            op: SpdeOperator::new(lattice),
            proj,
            design,
            y: data.iter().map(|c| c.y).collect(),
            n: data.iter().map(|c| c.n).collect(),
            ln_choose: data.iter().map(|c| ln_choose(c.n, c.y)).collect(),
            priors: spec.priors.clone(),
            data_weight,
            standardization,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.op.node_count()
    }

    pub fn n_clusters(&self) -> usize {
        self.y.len()
    }

    pub fn theta_dim(&self) -> usize {
        if self.class.has_nugget() || self.class.has_dispersion() {
            3
        } else {
            2
        }
    }

    pub fn hyper(theta: &[f64]) -> FieldHyperparams {
        FieldHyperparams {
            rho: theta[0].exp(),
            sigma_s: theta[1].exp(),
        }
    }

    /// Prior means and SDs of the log hyperparameters.
    pub fn theta_prior(&self) -> Vec<(f64, f64)> {
        let pr = &self.priors;
        let mut v = vec![
            (pr.rho_median.ln(), pr.log_rho_sd),
            (pr.log_sigma_s_mean, pr.log_sigma_s_sd),
        ];
        if self.class.has_nugget() {
            v.push((pr.log_nugget_mean, pr.log_nugget_sd));
        } else if self.class.has_dispersion() {
            v.push((pr.log_d_mean, pr.log_d_sd));
        }
        v
    }

    fn design_row(&self, c: usize) -> &[f64] {
        &self.design[c * self.p..(c + 1) * self.p]
    }

    pub fn eta_tilde(&self, x: &[f64]) -> Vec<f64> {
        let nn = self.n_nodes();
        let (u, b) = x.split_at(nn);
        (0..self.n_clusters())
            .map(|c| {
                let xb: f64 = self.design_row(c).iter().zip(b).map(|(a, b)| a * b).sum();
                xb + self.proj.apply_row(c, u)
            })
            .collect()
    }

    pub fn latent(&self, x: Vec<f64>, nugget: Vec<f64>) -> Latent {
        let eta_tilde = self.eta_tilde(&x);
        Latent { x, nugget, eta_tilde }
    }

    fn dispersion(&self, theta: &[f64]) -> f64 {
        theta[2].exp()
    }

    fn nugget_sd(&self, theta: &[f64]) -> f64 {
        theta[2].exp()
    }

    /// Log-likelihood of cluster `c` at total logit `eta` (constants included).
    fn cluster_loglik(&self, c: usize, eta: f64, theta: &[f64]) -> f64 {
        let (y, n) = (self.y[c], self.n[c]);
        let k = match self.class {
            ModelClass::BetaBinomialOd => {
                betabinomial_kernel(y, n, crate::stats::expit(eta), self.dispersion(theta))
            }
            _ => binomial_kernel(y, n, eta),
        };
        self.ln_choose[c] + k
    }

    fn cluster_derivs(&self, c: usize, eta: f64, theta: &[f64]) -> (f64, f64) {
        let (y, n) = (self.y[c], self.n[c]);
        match self.class {
            ModelClass::BetaBinomialOd => betabinomial_derivs(y, n, eta, self.dispersion(theta)),
            _ => binomial_derivs(y, n, eta),
        }
    }

    /// Unnormalised log posterior of `(θ, x, δ)`.
    pub fn log_post(&self, theta: &[f64], z: &Latent) -> f64 {
        let nn = self.n_nodes();
        let hyper = Self::hyper(theta);
        let mut lp = 0.0;
        if self.data_weight != 0.0 {
            let mut ll = 0.0;
            for c in 0..self.n_clusters() {
                let delta = if self.class.has_nugget() { z.nugget[c] } else { 0.0 };
                ll += self.cluster_loglik(c, z.eta_tilde[c] + delta, theta);
            }
            lp += self.data_weight * ll;
        }
        lp += self.op.log_density(&z.x[..nn], &hyper);
        for b in &z.x[nn..] {
            lp += normal_logpdf(*b, 0.0, self.priors.fixed_sd);
        }
        if self.class.has_nugget() {
            let s = self.nugget_sd(theta);
            for d in &z.nugget {
                lp += normal_logpdf(*d, 0.0, s);
            }
        }
        for (t, (m, s)) in theta.iter().zip(self.theta_prior()) {
            lp += normal_logpdf(*t, m, s);
        }
        lp
    }

    /// Newton iterations for the mode of `π(x, δ | θ, y)` started at `start`,
    /// returning the Gaussian approximation at the converged expansion point.
    pub fn approximate(&self, theta: &[f64], start: &Latent) -> Result<Approx> {
        let nn = self.n_nodes();
        let nc = self.n_clusters();
        let p = self.p;
        let hyper = Self::hyper(theta);
        let q = self.op.precision(&hyper)?;
        let nugget_var = if self.class.has_nugget() {
            Some(self.nugget_sd(theta).powi(2))
        } else {
            None
        };
        let mut eta_tilde = start.eta_tilde.clone();
        let mut nugget = start.nugget.clone();
        let mut w = vec![0.0; nc];
        let mut t = vec![0.0; nc];
        let mut lambda = vec![0.0; nc];
        let mut wt = vec![0.0; nc];
        let mut tt = vec![0.0; nc];
        let mut iter = 0;
        loop {
            iter += 1;
            for c in 0..nc {
                let delta = if nugget_var.is_some() { nugget[c] } else { 0.0 };
                let eta = eta_tilde[c] + delta;
                let (g, info) = if self.data_weight != 0.0 {
                    let (g, info) = self.cluster_derivs(c, eta, theta);
                    (self.data_weight * g, (self.data_weight * info).max(MIN_INFO))
                } else {
                    (0.0, 0.0)
                };
                w[c] = info;
                t[c] = info * eta + g;
                match nugget_var {
                    Some(s2) => {
                        let denom = 1.0 + s2 * info;
                        wt[c] = info / denom;
                        tt[c] = t[c] / denom;
                        lambda[c] = info + 1.0 / s2;
                    }
                    None => {
                        wt[c] = info;
                        tt[c] = t[c];
                    }
                }
            }
            let mut h = q.clone();
            let mut border = vec![vec![0.0; nn]; p];
            let mut corner = vec![0.0; p * p];
            for j in 0..p {
                corner[j * p + j] = 1.0 / self.priors.fixed_sd.powi(2);
            }
            let mut rhs = vec![0.0; nn + p];
            for c in 0..nc {
                let row = self.design_row(c);
                let entries: Vec<(usize, f64)> = self.proj.row(c).collect();
                for (a, &(ia, va)) in entries.iter().enumerate() {
                    rhs[ia] += tt[c] * va;
                    for &(ib, vb) in &entries[..=a] {
                        h.add(ia, ib, wt[c] * va * vb);
                    }
                    for j in 0..p {
                        border[j][ia] += wt[c] * va * row[j];
                    }
                }
                for j in 0..p {
                    rhs[nn + j] += tt[c] * row[j];
                    for k in 0..=j {
                        corner[j * p + k] += wt[c] * row[j] * row[k];
                    }
                }
            }
            for j in 0..p {
                for k in 0..j {
                    corner[k * p + j] = corner[j * p + k];
                }
            }
            let factor = BorderedFactor::new(h, border, &corner)?;
            let mean = factor.solve(&rhs);
            let new_eta = self.eta_tilde(&mean);
            let mut diff: f64 = 0.0;
            for c in 0..nc {
                let d_new = match nugget_var {
                    Some(_) => (t[c] - w[c] * new_eta[c]) / lambda[c],
                    None => 0.0,
                };
                let old = eta_tilde[c] + if nugget_var.is_some() { nugget[c] } else { 0.0 };
                diff = diff.max((new_eta[c] + d_new - old).abs());
                if nugget_var.is_some() {
                    nugget[c] = d_new;
                }
            }
            eta_tilde = new_eta;
            if !diff.is_finite() {
                return Err(Error::Numeric("Newton iteration diverged".into()));
            }
            if diff < NEWTON_TOL || iter >= NEWTON_MAX_ITER || self.data_weight == 0.0 {

                let mode = Latent {
                    x: mean.clone(),
                    nugget,
                    eta_tilde,
                };
                return Ok(Approx {
                    factor,
                    mean,
                    w,
                    t,
                    lambda,
                    mode,
                });
            }
        }
    }

    /// Maps standard-normal coordinates `ζ` to the latent state under the
    /// approximation: `x = m + L⁻ᵀζ_x`, nuggets from their conditional.
    pub fn unwhiten(&self, a: &Approx, zeta: &[f64]) -> Latent {
        let nx = a.mean.len();
        let dx = a.factor.solve_lt(&zeta[..nx]);
        let x: Vec<f64> = a.mean.iter().zip(&dx).map(|(m, d)| m + d).collect();
        let eta_tilde = self.eta_tilde(&x);
        let nugget = if self.class.has_nugget() {
            (0..self.n_clusters())
                .map(|c| {
                    let lam = a.lambda[c];
                    (a.t[c] - a.w[c] * eta_tilde[c]) / lam + zeta[nx + c] / lam.sqrt()
                })
                .collect()
        } else {
            Vec::new()
        };
        Latent { x, nugget, eta_tilde }
    }

    /// `log q(z)` for `z = unwhiten(ζ)`.
    pub fn log_q_whitened(&self, a: &Approx, zeta: &[f64]) -> f64 {
        let ln2pi = (2.0 * PI).ln();
        let ss: f64 = zeta.iter().map(|v| v * v).sum();
        let mut lq = 0.5 * a.factor.log_det() - 0.5 * ss - 0.5 * zeta.len() as f64 * ln2pi;
        if self.class.has_nugget() {
            lq += 0.5 * a.lambda.iter().map(|l| l.ln()).sum::<f64>();
        }
        lq
    }

    /// Log density of the Gaussian approximation at `z`.
    #[cfg(test)]
    pub fn log_q(&self, a: &Approx, z: &Latent) -> f64 {
        let ln2pi = (2.0 * PI).ln();
        let diff: Vec<f64> = z.x.iter().zip(&a.mean).map(|(x, m)| x - m).collect();
        let mut lq = 0.5 * a.factor.log_det() - 0.5 * a.factor.quad_form(&diff) - 0.5 * diff.len() as f64 * ln2pi;
        if self.class.has_nugget() {
            for c in 0..self.n_clusters() {
                let lam = a.lambda[c];
                let m = (a.t[c] - a.w[c] * z.eta_tilde[c]) / lam;
                let r = z.nugget[c] - m;
                lq += 0.5 * lam.ln() - 0.5 * lam * r * r - 0.5 * ln2pi;
            }
        }
        lq
    }

    /// Maps a raw-scale parameter vector onto the sampler's `(θ, latent)`.
    pub fn internal_state(&self, params: &ParamVector, nuggets: Option<&[f64]>) -> Result<(Vec<f64>, Latent)> {
        params.validate(self.n_nodes())?;
        let mut theta = vec![params.rho.ln(), params.sigma_s.ln()];
        if self.class.has_nugget() {
            theta.push(
                params
                    .sigma_nugget
                    .ok_or_else(|| Error::Spec("nugget class needs sigma_nugget".into()))?
                    .ln(),
            );
        } else if self.class.has_dispersion() {
            theta.push(
                params
                    .d
                    .ok_or_else(|| Error::Spec("beta-binomial class needs d".into()))?
                    .ln(),
            );
        }
        let (alpha_s, beta_s) = self.standardization.to_standardized(params.alpha, &params.beta);
        let mut x = params.field.clone();
        x.push(alpha_s);
        x.extend(beta_s);
        if self.include_strata {
            x.push(
                params
                    .gamma
                    .ok_or_else(|| Error::Spec("strata model needs gamma".into()))?,
            );
        }
        let nugget = if self.class.has_nugget() {
            let n = nuggets.ok_or_else(|| Error::Spec("nugget class needs cluster nuggets".into()))?;
            if n.len() != self.n_clusters() {
                return Err(Error::Dimension(format!(
                    "{} nuggets for {} clusters",
                    n.len(),
                    self.n_clusters()
                )));
            }
            n.to_vec()
        } else {
            Vec::new()
        };
        Ok((theta, self.latent(x, nugget)))
    }
}

/// Unnormalised log posterior used by the sampler, evaluated at a raw-scale
/// parameter vector. Clusters are taken in the order given; covariates are
/// standardised with `standardization`.
pub fn log_posterior(
    spec: &ModelSpec,
    data: &[ClusterObservation],
    lattice: &Lattice,
    standardization: &Standardization,
    params: &ParamVector,
    nuggets: Option<&[f64]>,
) -> Result<f64> {
    let problem = Problem::new(spec, data, lattice, standardization.clone(), 1.0)?;
    let (theta, latent) = problem.internal_state(params, nuggets)?;
    Ok(problem.log_post(&theta, &latent))
}
