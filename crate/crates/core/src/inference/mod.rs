//! Posterior sampling for every model class over the lattice field.
//!
//! The sampler works in whitened coordinates. For log hyperparameters θ the
//! latent Gaussian vector (field nodes, fixed effects and, for nugget
//! classes, per-cluster nuggets) is written as `z = m_θ + L_θ⁻ᵀ ζ`, where
//! `m_θ` and `L_θ` come from a Newton-mode Gaussian approximation of the
//! latent full conditional (nuggets eliminated through their Schur
//! complement). Each iteration makes
//!
//! 1. an adaptive random-walk move on θ with ζ held fixed;
//! 2. two Crank–Nicolson moves on ζ at fixed θ.
//!
//! Both are exact Metropolis–Hastings steps on `π(θ, z)`, so the Gaussian
//! approximation affects efficiency only.

mod config;
mod diagnostics;
mod fitfile;
mod posterior;
mod priors;
mod problem;
mod sampler;

pub use config::McmcConfig;
pub use diagnostics::{diagnostics, split_rhat, ConvergenceStatus, DiagnosticsReport, MonitorDiag, RHAT_FAIL};
pub use fitfile::{read_fit, write_fit, FIT_MAGIC};
pub use posterior::{PosteriorDraws, Standardization};
pub use priors::PriorSpec;
pub use problem::log_posterior;
pub use sampler::{fit, fit_with, FitOptions};
