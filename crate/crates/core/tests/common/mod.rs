#![allow(dead_code)]

use vaxmap_core::survey_data::{AreaId, GridCell, PopulationGrid, RasterGeometry};

use ndarray::Array2;
use vaxmap_core::coverage_models::{ModelClass, ModelSpec};
use vaxmap_core::inference::{ConvergenceStatus, DiagnosticsReport, McmcConfig, PosteriorDraws, PriorSpec, Standardization};
use vaxmap_core::spatial_field::Lattice;
use vaxmap_core::survey_data::ClusterObservation;

pub fn lattice() -> Lattice {
    Lattice {
        origin_lon: 0.0,
        origin_lat: 0.0,
        spacing: 0.5,
        ncols: 7,
        nrows: 6,
    }
}

/// Deterministic clusters spread over the interior of [`lattice`].
pub fn clusters(count: usize) -> Vec<ClusterObservation> {
    (0..count)
        .map(|i| {
            let u = (i as f64 * 0.618_034).fract();
            let v = (i as f64 * 0.414_214).fract();
            let n = 4 + (i % 5) as u32;
            ClusterObservation {
                cluster_id: format!("C{i:03}"),
                lon: 0.1 + 2.8 * u,
                lat: 0.1 + 2.3 * v,
                state_id: format!("S{}", i % 3),
                lga_id: None,
                urban: i % 4 == 0,
                n,
                y: ((i * 7) % (n as usize + 1)) as u32,
                covariates: vec![(i as f64 * 1.3).sin() + 2.0],
            }
        })
        .collect()
}

pub fn spec(class: ModelClass) -> ModelSpec {
    ModelSpec {
        class,
        include_strata: true,
        covariate_names: vec!["x1".into()],
        priors: PriorSpec::with_rho_median(1.0),
    }
}

pub fn quick_mcmc(seed: u64) -> McmcConfig {
    McmcConfig {
        chains: 2,
        iterations: 300,
        burn_in: 100,
        thin: 2,
        seed,
    }
}

/// Five hand-written joint draws over a 2 × 2 lattice and three clusters.
pub fn tiny_draws(class: ModelClass) -> (PosteriorDraws, Vec<ClusterObservation>) {
    let lat = Lattice {
        origin_lon: 0.0,
        origin_lat: 0.0,
        spacing: 1.0,
        ncols: 2,
        nrows: 2,
    };
    let data = vec![
        ClusterObservation {
            cluster_id: "a".into(),
            lon: 0.25,
            lat: 0.5,
            state_id: "S1".into(),
            lga_id: None,
            urban: true,
            n: 6,
            y: 4,
            covariates: vec![1.0],
        },
        ClusterObservation {
            cluster_id: "b".into(),
            lon: 0.75,
            lat: 0.1,
            state_id: "S1".into(),
            lga_id: None,
            urban: false,
            n: 8,
            y: 1,
            covariates: vec![-0.5],
        },
        ClusterObservation {
            cluster_id: "c".into(),
            lon: 1.0,
            lat: 1.0,
            state_id: "S2".into(),
            lga_id: None,
            urban: false,
            n: 3,
            y: 3,
            covariates: vec![0.2],
        },
    ];
    let m = 5;
    let f = |k: usize, s: f64| (0..m).map(|i| s + 0.1 * ((i * (k + 3)) % 7) as f64).collect::<Vec<_>>();
    let draws = PosteriorDraws {
        spec: spec(class),
        lattice: lat,
        mcmc: McmcConfig {
            chains: 1,
            iterations: 6,
            burn_in: 1,
            thin: 1,
            seed: 0,
        },
        standardization: Standardization::identity(1),
        cluster_ids: data.iter().map(|c| c.cluster_id.clone()).collect(),
        data_digest: String::new(),
        chains: 1,
        alpha: f(0, -0.3),
        beta: Array2::from_shape_vec((m, 1), f(1, 0.2)).unwrap(),
        gamma: Some(f(2, 0.1)),
        rho: f(3, 1.0),
        sigma_s: f(4, 0.5),
        d: (class == ModelClass::BetaBinomialOd).then(|| f(5, 2.0)),
        sigma_nugget: class.has_nugget().then(|| f(6, 0.4)),
        field: Array2::from_shape_fn((m, 4), |(i, k)| 0.2 * ((i + 2 * k) % 5) as f64 - 0.4),
        nuggets: class.has_nugget().then(|| Array2::zeros((m, 3))),
        diagnostics: DiagnosticsReport {
            status: ConvergenceStatus::EssOnly,
            monitors: vec![],
        },
    };
    (draws, data)
}

fn choose(n: u32, k: u32) -> f64 {
    (1..=k).map(|j| (n - k + j) as f64 / j as f64).product()
}

/// Straightforward per-draw likelihoods and the textbook WAIC formula.
/// Nugget classes integrate the nugget with a 4001-point Simpson rule.
pub fn brute_force_waic(draws: &PosteriorDraws, data: &[ClusterObservation]) -> f64 {
    let m = draws.alpha.len();
    let lat = draws.lattice;
    let mut lppd = 0.0;
    let mut pw = 0.0;
    for c in data {
        let mut lik = vec![];
        for i in 0..m {
            let fx = (c.lon - lat.origin_lon) / lat.spacing;
            let fy = (c.lat - lat.origin_lat) / lat.spacing;
            let (c0, r0) = ((fx.floor() as usize).min(lat.ncols - 2), (fy.floor() as usize).min(lat.nrows - 2));
            let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
            let u = |r: usize, k: usize| draws.field[[i, r * lat.ncols + k]];
            let s = u(r0, c0) * (1.0 - tx) * (1.0 - ty)
                + u(r0, c0 + 1) * tx * (1.0 - ty)
                + u(r0 + 1, c0) * (1.0 - tx) * ty
                + u(r0 + 1, c0 + 1) * tx * ty;
            let eta = draws.alpha[i]
                + draws.beta[[i, 0]] * c.covariates[0]
                + if c.urban { draws.gamma.as_ref().unwrap()[i] } else { 0.0 }
                + s;
            let binom = |e: f64| {
                let p = 1.0 / (1.0 + (-e).exp());
                choose(c.n, c.y) * p.powi(c.y as i32) * (1.0 - p).powi((c.n - c.y) as i32)
            };
            let l = match draws.spec.class {
                ModelClass::BinomialNn => binom(eta),
                ModelClass::BetaBinomialOd => {
                    let d = draws.d.as_ref().unwrap()[i];
                    let p = 1.0 / (1.0 + (-eta).exp());
                    let (a, b) = (p * d, (1.0 - p) * d);
                    let mut v = choose(c.n, c.y);
                    for j in 0..c.y {
                        v *= a + j as f64;
                    }
                    for j in 0..(c.n - c.y) {
                        v *= b + j as f64;
                    }
                    for j in 0..c.n {
                        v /= d + j as f64;
                    }
                    v
                }
                _ => {
                    let sd = draws.sigma_nugget.as_ref().unwrap()[i];
                    let steps = 4000;
                    let (lo, hi) = (-10.0 * sd, 10.0 * sd);
                    let h = (hi - lo) / steps as f64;
                    let mut acc = 0.0;
                    for k in 0..=steps {
                        let x = lo + k as f64 * h;
                        let w = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                        let dens = (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                        acc += w * dens * binom(eta + x);
                    }
                    acc * h / 3.0
                }
            };
            lik.push(l);
        }
        lppd += (lik.iter().sum::<f64>() / m as f64).ln();
        let logs: Vec<f64> = lik.iter().map(|l| l.ln()).collect();
        let mean = logs.iter().sum::<f64>() / m as f64;
        pw += logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    }
    -2.0 * (lppd - pw)
}

/// A 4 × 4 grid of 0.25° cells inside the unit square, two states split by
/// column.
pub fn unit_square_grid() -> PopulationGrid {
    let geometry = RasterGeometry {
        ncols: 4,
        nrows: 4,
        xllcorner: 0.0,
        yllcorner: 0.0,
        cellsize: 0.25,
    };
    let mut cells = vec![];
    for row in 0..4 {
        for col in 0..4 {
            let (lon, lat) = geometry.cell_center(row, col);
            cells.push(GridCell {
                row,
                col,
                lon,
                lat,
                pop: 10.0 + (row * 4 + col) as f64,
                urban: (row + col) % 3 == 0,
                covariates: vec![0.1 * col as f64 - 0.2],
                area: Some(usize::from(col >= 2)),
            });
        }
    }
    PopulationGrid {
        geometry,
        covariate_names: vec!["x1".into()],
        areas: vec![
            AreaId { code: 1, state_id: "S1".into(), lga_id: "S1-L1".into() },
            AreaId { code: 2, state_id: "S2".into(), lga_id: "S2-L1".into() },
        ],
        cells,
    }
}
