use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use crate::error::{Error, Result};
use crate::linalg::{BandedSym, BorderedFactor};

/// Matérn range (degrees) and marginal SD (logit scale).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHyperparams {
    pub rho: f64,
    pub sigma_s: f64,
}

impl FieldHyperparams {
    pub fn new(rho: f64, sigma_s: f64) -> Result<Self> {
        let h = Self { rho, sigma_s };
        h.check()?;
        Ok(h)
    }

    fn check(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) || !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::Domain(format!(
                "field hyperparameters must be positive (rho = {}, sigma_s = {})",
                self.rho, self.sigma_s
            )));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        8f64.sqrt() / self.rho
    }

    /// `τ²` giving marginal variance `σ²` in the continuum limit.
    pub fn tau2(&self) -> f64 {
        let k = self.kappa();
        1.0 / (4.0 * PI * k * k * self.sigma_s * self.sigma_s)
    }
}

/// Hyperparameter-independent pieces of the lattice precision.
#[derive(Clone, Debug)]
pub struct SpdeOperator {
    lattice: Lattice,
    lap: BandedSym,
    lap2: BandedSym,
    identity: BandedSym,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
}

impl SpdeOperator {
    pub fn new(lattice: &Lattice) -> Self {
        let n = lattice.node_count();
        let bw = 2 * lattice.ncols;
        let neighbours = |i: usize| -> Vec<usize> {
            let (r, c) = (i / lattice.ncols, i % lattice.ncols);
            let mut v = Vec::with_capacity(4);
            if c > 0 {
                v.push(i - 1);
            }
            if c + 1 < lattice.ncols {
                v.push(i + 1);
            }
            if r > 0 {
                v.push(i - lattice.ncols);
            }
            if r + 1 < lattice.nrows {
                v.push(i + lattice.ncols);
            }
            v
        };
        // graph Laplacian rows as (column, value)
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let nb = neighbours(i);
                let mut row = vec![(i, nb.len() as f64)];
                row.extend(nb.into_iter().map(|j| (j, -1.0)));
                row
            })
            .collect();
        let mut lap = BandedSym::zeros(n, bw);
        let mut lap2 = BandedSym::zeros(n, bw);
        let mut identity = BandedSym::zeros(n, bw);
        for i in 0..n {
            identity.add(i, i, 1.0);
            for &(j, v) in &rows[i] {
                if j <= i {
                    lap.add(i, j, v);
                }
            }
            for &(k, a) in &rows[i] {
                for &(j, b) in &rows[k] {
                    if j <= i {
                        lap2.add(i, j, a * b);
                    }
                }
            }
        }
        let path_eigs = |m: usize| -> Vec<f64> {
            (0..m)
                .map(|k| {
                    let s = (PI * k as f64 / (2.0 * m as f64)).sin();
                    4.0 * s * s
                })
                .collect()
        };
        Self {
            lattice: *lattice,
            lap,
            lap2,
            identity,
            eig_x: path_eigs(lattice.ncols),
            eig_y: path_eigs(lattice.nrows),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn node_count(&self) -> usize {
        self.lattice.node_count()
    }

    pub fn bandwidth(&self) -> usize {
        self.lap.bandwidth()
    }

    fn coefficients(&self, hyper: &FieldHyperparams) -> (f64, f64, f64) {
        let h2 = self.lattice.spacing * self.lattice.spacing;
        let k2 = hyper.kappa().powi(2);
        let c = hyper.tau2() * h2;
        (c * k2 * k2, c * 2.0 * k2 / h2, c / (h2 * h2))
    }

    /// Sparse precision matrix for `hyper`.
    pub fn precision(&self, hyper: &FieldHyperparams) -> Result<BandedSym> {
        hyper.check()?;
        let (a, b, c) = self.coefficients(hyper);
        let mut q = BandedSym::zeros(self.node_count(), self.bandwidth());
        q.set_combination(&[(a, &self.identity), (b, &self.lap), (c, &self.lap2)]);
        Ok(q)
    }

    /// `ln |Q|` from the closed-form Laplacian spectrum.
    pub fn log_det(&self, hyper: &FieldHyperparams) -> f64 {
        let h2 = self.lattice.spacing * self.lattice.spacing;
        let k2 = hyper.kappa().powi(2);
        let n = self.node_count() as f64;
        let mut s = 0.0;
        for ey in &self.eig_y {
            for ex in &self.eig_x {
                s += (k2 + (ex + ey) / h2).ln();
            }
        }
        n * (hyper.tau2() * h2).ln() + 2.0 * s
    }

    /// `uᵀ Q u` via `τ² h² ‖K u‖²`.
    pub fn quad_form(&self, u: &[f64], hyper: &FieldHyperparams) -> f64 {
        let lat = &self.lattice;
        let h2 = lat.spacing * lat.spacing;
        let k2 = hyper.kappa().powi(2);
        let mut acc = 0.0;
        for r in 0..lat.nrows {
            for c in 0..lat.ncols {
                let i = r * lat.ncols + c;
                let ui = u[i];
                let mut lu = 0.0;
                if c > 0 {
                    lu += ui - u[i - 1];
                }
                if c + 1 < lat.ncols {
                    lu += ui - u[i + 1];
                }
                if r > 0 {
                    lu += ui - u[i - lat.ncols];
                }
                if r + 1 < lat.nrows {
                    lu += ui - u[i + lat.ncols];
                }
                let ku = k2 * ui + lu / h2;
                acc += ku * ku;
            }
        }
        hyper.tau2() * h2 * acc
    }

    /// `ln N(u; 0, Q⁻¹)`.
    pub fn log_density(&self, u: &[f64], hyper: &FieldHyperparams) -> f64 {
        let n = self.node_count() as f64;
        0.5 * self.log_det(hyper) - 0.5 * self.quad_form(u, hyper) - 0.5 * n * (2.0 * PI).ln()
    }
}

/// Precision of the lattice field for `hyper`.
pub fn spde_precision(lattice: &Lattice, hyper: &FieldHyperparams) -> Result<BandedSym> {
    SpdeOperator::new(lattice).precision(hyper)
}

/// Repeated exact draws from `N(0, Q⁻¹)` using one factorisation.
pub struct FieldSampler {
    factor: BorderedFactor,
}

impl FieldSampler {
    pub fn new(precision: BandedSym) -> Result<Self> {
        let factor = BorderedFactor::new(precision, Vec::new(), &[])?;
        Ok(Self { factor })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.factor.dim())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.factor.solve_lt(&z)
    }
}

/// One exact draw from the field with precision `precision`.
pub fn sample_field(precision: &BandedSym, seed: u64) -> Result<Vec<f64>> {
    let sampler = FieldSampler::new(precision.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(&mut rng))
}
