use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey_data::BoundingBox;

/// Priors on the fixed effects and the log hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// SD of the normal prior on standardised fixed effects.
    pub fixed_sd: f64,
    /// Prior median of the spatial range ρ (degrees).
    pub rho_median: f64,
    pub log_rho_sd: f64,
    pub log_sigma_s_mean: f64,
    pub log_sigma_s_sd: f64,
    pub log_d_mean: f64,
    pub log_d_sd: f64,
    pub log_nugget_mean: f64,
    pub log_nugget_sd: f64,
}

impl PriorSpec {
    /// Defaults with ρ₀ one fifth of the domain diameter.
    pub fn for_domain(bbox: &BoundingBox) -> Self {
        Self::with_rho_median(bbox.diameter() / 5.0)
    }

    pub fn with_rho_median(rho_median: f64) -> Self {
        Self {
            fixed_sd: 10.0,
            rho_median,
            log_rho_sd: 1.0,
            log_sigma_s_mean: 0.0,
            log_sigma_s_sd: 1.0,
            log_d_mean: 0.0,
            log_d_sd: 1.5,
            log_nugget_mean: 0.0,
            log_nugget_sd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sds = [
            ("fixed_sd", self.fixed_sd),
            ("log_rho_sd", self.log_rho_sd),
            ("log_sigma_s_sd", self.log_sigma_s_sd),
            ("log_d_sd", self.log_d_sd),
            ("log_nugget_sd", self.log_nugget_sd),
        ];
        for (name, v) in sds {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Spec(format!("prior {name} must be positive, got {v}")));
            }
        }
        if !(self.rho_median > 0.0) || !self.rho_median.is_finite() {
            return Err(Error::Spec(format!(
                "prior rho_median must be positive, got {}",
                self.rho_median
            )));
        }
        Ok(())
    }
}
