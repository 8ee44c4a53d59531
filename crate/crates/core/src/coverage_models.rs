//! Likelihoods, linear predictors and inference targets of the four model
//! classes.
//!
//! * `BinomialNn`: binomial counts, no cluster nugget; target `expit(η)`.
//! * `BetaBinomialOd`: beta-binomial counts with mean `μ = expit(η)` and
//!   dispersion `d`; target `μ`.
//! * `LonoBinomialOd`: binomial counts on `expit(η + δ)`, `δ ~ N(0, σ²)`
//!   within-cluster; target `E[expit(η + δ)]` via the probit-matching
//!   approximation `expit(η / √(1 + h²σ²))`.
//! * `BinomialTs`: same likelihood as `LonoBinomialOd`, but the nugget is a
//!   between-cluster signal; target `expit(η + ε)` with `ε` drawn per unit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PriorSpec;
use crate::stats::{expit, ln_choose, logit, softplus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    BinomialNn,
    BetaBinomialOd,
    LonoBinomialOd,
    BinomialTs,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] = [
        ModelClass::BinomialNn,
        ModelClass::BetaBinomialOd,
        ModelClass::LonoBinomialOd,
        ModelClass::BinomialTs,
    ];

    /// Classes carrying a per-cluster logit-scale nugget in the likelihood.
    pub fn has_nugget(self) -> bool {
        matches!(self, ModelClass::LonoBinomialOd | ModelClass::BinomialTs)
    }

    pub fn has_dispersion(self) -> bool {
        matches!(self, ModelClass::BetaBinomialOd)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::BinomialNn => "binomial-nn",
            ModelClass::BetaBinomialOd => "beta-binomial-od",
            ModelClass::LonoBinomialOd => "lono-binomial-od",
            ModelClass::BinomialTs => "binomial-ts",
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown model class `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub class: ModelClass,
    pub include_strata: bool,
    pub covariate_names: Vec<String>,
    pub priors: PriorSpec,
}

impl ModelSpec {
    /// Number of fixed effects: intercept, covariates and optional urban term.
    pub fn n_fixed(&self) -> usize {
        1 + self.covariate_names.len() + usize::from(self.include_strata)
    }
}

/// One joint parameter draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Option<f64>,
    pub field: Vec<f64>,
    pub rho: f64,
    pub sigma_s: f64,
    pub d: Option<f64>,
    pub sigma_nugget: Option<f64>,
}

impl ParamVector {
    pub fn validate(&self, node_count: usize) -> Result<()> {
        if let Some(d) = self.d {
            if !(d > 0.0) {
                return Err(Error::Domain(format!("dispersion d must be positive, got {d}")));
            }
        }
        if let Some(s) = self.sigma_nugget {
            if !(s >= 0.0) {
                return Err(Error::Domain(format!("nugget SD must be non-negative, got {s}")));
            }
        }
        if self.field.len() != node_count {
            return Err(Error::Dimension(format!(
                "field has {} values for {node_count} nodes",
                self.field.len()
            )));
        }
        Ok(())
    }
}

/// `α + βᵀx + γ·1[urban] + s`; the urban term only enters when `gamma` is set.
pub fn linear_predictor(params: &ParamVector, covariates: &[f64], urban: bool, s_value: f64) -> Result<f64> {
    if covariates.len() != params.beta.len() {
        return Err(Error::Dimension(format!(
            "{} covariates for {} coefficients",
            covariates.len(),
            params.beta.len()
        )));
    }
    let xb: f64 = params.beta.iter().zip(covariates).map(|(b, x)| b * x).sum();
    let g = match params.gamma {
        Some(g) if urban => g,
        _ => 0.0,
    };
    Ok(params.alpha + xb + g + s_value)
}

/// Probability floor applied inside the log-likelihoods.
pub const PROB_FLOOR: f64 = 1e-12;

fn logit_bound() -> f64 {
    logit(1.0 - PROB_FLOOR)
}

fn check_counts(y: u32, n: u32) -> Result<()> {
    if y > n {
        return Err(Error::Domain(format!("y = {y} exceeds n = {n}")));
    }
    Ok(())
}

/// Binomial log-pmf at success probability `expit(eta)`.
pub fn loglik_binomial(y: u32, n: u32, eta: f64) -> Result<f64> {
    check_counts(y, n)?;
    if eta.is_nan() {
        return Err(Error::Domain("eta is NaN".into()));
    }
    Ok(ln_choose(n, y) + binomial_kernel(y, n, eta))
}

/// Binomial log-pmf without the combinatorial constant.
#[inline]
pub(crate) fn binomial_kernel(y: u32, n: u32, eta: f64) -> f64 {
    let b = logit_bound();
    let e = eta.clamp(-b, b);
    -(y as f64) * softplus(-e) - (n - y) as f64 * softplus(e)
}

/// Score and observed information of the binomial kernel in `eta`.
#[inline]
pub(crate) fn binomial_derivs(y: u32, n: u32, eta: f64) -> (f64, f64) {
    let p = expit(eta);
    (y as f64 - n as f64 * p, n as f64 * p * (1.0 - p))
}

/// Beta-binomial log-pmf with mean `mu` and dispersion `d`
/// (beta shapes `μd`, `(1 − μ)d`).
pub fn loglik_betabinomial(y: u32, n: u32, mu: f64, d: f64) -> Result<f64> {
    check_counts(y, n)?;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("mu must lie in (0, 1), got {mu}")));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("d must be positive, got {d}")));
    }
    Ok(ln_choose(n, y) + betabinomial_kernel(y, n, mu, d))
}

/// `ln B(y + a, n − y + b) − ln B(a, b)`.
pub(crate) fn betabinomial_kernel(y: u32, n: u32, mu: f64, d: f64) -> f64 {
    let mu = mu.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let a = mu * d;
    let b = (1.0 - mu) * d;
    if n <= 10_000 {
        // rising-factorial form: exact for integer counts and free of
        // cancellation when d is large
        let mut s = 0.0;
        for j in 0..y {
            s += (a + j as f64).ln();
        }
        for j in 0..(n - y) {
            s += (b + j as f64).ln();
        }
        for j in 0..n {
            s -= (d + j as f64).ln();
        }
        s
    } else {
        let lbeta = |p: f64, q: f64| libm::lgamma(p) + libm::lgamma(q) - libm::lgamma(p + q);
        lbeta(y as f64 + a, (n - y) as f64 + b) - lbeta(a, b)
    }
}

/// Score and (clamped) observed information of the beta-binomial kernel in
/// `eta = logit(μ)`.
pub(crate) fn betabinomial_derivs(y: u32, n: u32, eta: f64, d: f64) -> (f64, f64) {
    let mu = expit(eta).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let a = mu * d;
    let b = (1.0 - mu) * d;
    let (mut s1, mut s2) = (0.0, 0.0);
    for j in 0..y {
        let t = 1.0 / (a + j as f64);
        s1 += t;
        s2 += t * t;
    }
    for j in 0..(n - y) {
        let t = 1.0 / (b + j as f64);
        s1 -= t;
        s2 += t * t;
    }
    let v = mu * (1.0 - mu);
    let grad = d * s1 * v;
    let hess = -d * d * s2 * v * v + d * s1 * v * (1.0 - 2.0 * mu);
    (grad, -hess)
}

/// `h = 16√3 / (15π)` of the logistic–normal mean approximation.
pub const LONO_H: f64 = 0.588_084_155_116_578_2;

pub fn lono_h2() -> f64 {
    LONO_H * LONO_H
}

/// `expit(η / √(1 + h² σ²))`.
pub fn lono_target(eta: f64, sigma_delta: f64) -> f64 {
    expit(eta / (1.0 + lono_h2() * sigma_delta * sigma_delta).sqrt())
}

/// `expit(η + ε)`.
pub fn ts_target(eta: f64, epsilon: f64) -> f64 {
    expit(eta + epsilon)
}
