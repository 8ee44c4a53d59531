use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            chains: 4,
            iterations: 5000,
            burn_in: 2000,
            thin: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Validation("at least one chain is required".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::Validation(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        if self.draws_per_chain() == 0 {
            return Err(Error::Validation("configuration retains no draws".into()));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}
