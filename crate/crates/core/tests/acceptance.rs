//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 2 8`.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use vaxmap_core::coverage_models::{loglik_betabinomial, lono_target, ModelClass, ModelSpec};
use vaxmap_core::inference::{fit, write_fit, McmcConfig, PosteriorDraws, PriorSpec};
use vaxmap_core::linalg::GaussHermite;
use vaxmap_core::prediction::{aggregate, predict_cells, predict_cells_with, write_coverage_draws, CoverageDraws};
use vaxmap_core::presentation::{
    classify, default_palette, exceedance, export_ridgeline, pooled_draws, quantile_partition, rank_distribution,
    render, select_granularity, select_k, summarize, write_classified_csv, write_exceedance_csv, write_rank_csv,
    write_summary_csv, Partition,
};
use vaxmap_core::rng::{derive, Stream};
use vaxmap_core::simulator::{
    draw_survey, simulate_truth, synthetic_grid, write_truth, SurveyDesign, SyntheticGridSpec, SyntheticTruth,
    TruthParams,
};
use vaxmap_core::spatial_field::{build_lattice, spde_precision, FieldHyperparams, FieldSampler, Lattice};
use vaxmap_core::stats::{quantile_sorted, sorted_copy};
use vaxmap_core::survey_data::{
    aggregation_weights, save_clusters, BoundingBox, ClusterObservation, Level, PopulationGrid,
};
use vaxmap_core::validation::{loso_cv, metrics, prediction_errors, waic, write_report_csv};

const BASE_SEED: u64 = 20_170_412;
const FIT_SPACING: f64 = 0.6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {n:>2}: {} [{secs:.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn timed<T>(limit_secs: f64, f: impl FnOnce() -> T) -> (T, bool, f64) {
    let start = Instant::now();
    let v = f();
    let secs = start.elapsed().as_secs_f64();
    (v, secs < limit_secs, secs)
}

fn ci95(v: &[f64]) -> (f64, f64) {
    let s = sorted_copy(v);
    (quantile_sorted(&s, 0.025), quantile_sorted(&s, 0.975))
}

fn median(v: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(v), 0.5)
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let ((worst, p1), fast, secs) = timed(1.0, || {
        let mut worst: f64 = 0.0;
        for mu in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for d in [0.2, 1.0, 3.0, 10.0, 100.0] {
                for n in 0..=30u32 {
                    let s: f64 = (0..=n).map(|y| loglik_betabinomial(y, n, mu, d).unwrap().exp()).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        (worst, loglik_betabinomial(1, 2, 0.5, 1.0).unwrap().exp())
    });
    let pass = worst <= 1e-10 && (p1 - 0.25).abs() <= 1e-10 && fast;
    outcome(
        pass,
        format!("max |Σpmf − 1| = {worst:.2e}; P(Y=1 | n=2, μ=0.5, d=1) = {p1:.12}; {secs:.3}s"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let ((max_quad, max_formula, gh_vs_simpson), fast, secs) = timed(1.0, || {
        let gh = GaussHermite::new(64);
        let h = 16.0 * 3f64.sqrt() / (15.0 * PI);
        let expit = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (mut max_quad, mut max_formula, mut gh_vs_simpson) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..21 {
            let eta = -5.0 + 0.5 * i as f64;
            for j in 0..9 {
                let var = 0.5 * j as f64;
                let sd = var.sqrt();
                let quad = gh.normal_expectation(sd, |d| expit(eta + d));
                if j % 4 == 0 {
                    gh_vs_simpson = gh_vs_simpson.max((quad - simpson_logit_normal(eta, sd)).abs());
                }
                let got = lono_target(eta, sd);
                max_quad = max_quad.max((got - quad).abs());
                max_formula = max_formula.max((got - expit(eta / (1.0 + h * h * var).sqrt())).abs());
            }
        }
        (max_quad, max_formula, gh_vs_simpson)
    });
    let pass = max_quad <= 0.02 && max_formula <= 1e-12 && gh_vs_simpson < 1e-8 && fast;
    outcome(
        pass,
        format!(
            "max |target − GH64| = {max_quad:.4}; max |target − formula| = {max_formula:.1e}; GH64 vs Simpson {gh_vs_simpson:.1e}; {secs:.3}s"
        ),
    )
}

fn simpson_logit_normal(eta: f64, sd: f64) -> f64 {
    let expit = |x: f64| 1.0 / (1.0 + (-x).exp());
    if sd == 0.0 {
        return expit(eta);
    }
    let steps = 4000;
    let (lo, hi) = (-12.0 * sd, 12.0 * sd);
    let h = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for k in 0..=steps {
        let x = lo + k as f64 * h;
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt()) * expit(eta + x);
    }
    acc * h / 3.0
}

// ---------------------------------------------------------------- 3

/// `K₁(x)` from `∫₀^∞ e^{−x cosh t} cosh t dt`.
fn bessel_k1(x: f64) -> f64 {
    let steps = 20_000;
    let upper = 12.0;
    let h = upper / steps as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * t.cosh();
    let mut acc = f(0.0) + f(upper);
    for k in 1..steps {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    acc * h / 3.0
}

fn criterion_3() -> Outcome {
    let (results, fast, secs) = timed(120.0, || {
        [(1.0, 1.0, 0.125), (2.0, 0.5, 0.25)]
            .into_iter()
            .enumerate()
            .map(|(s, (rho, sigma, h))| matern_check(rho, sigma, h, derive(BASE_SEED, Stream::Field, s as u64)))
            .collect::<Vec<_>>()
    });
    let target = 8f64.sqrt() * bessel_k1(8f64.sqrt());
    let mut pass = fast;
    let mut parts = vec![];
    for (rho, sigma, sd, corr) in results {
        let ok = (sd / sigma - 1.0).abs() <= 0.10 && (corr - target).abs() <= 0.05;
        pass &= ok;
        parts.push(format!(
            "ρ={rho} σ={sigma}: sd {sd:.3} ({:+.1}%), corr(ρ) {corr:.3} vs {target:.3}",
            100.0 * (sd / sigma - 1.0)
        ));
    }
    outcome(pass, format!("{}; {secs:.1}s", parts.join("; ")))
}

/// Monte Carlo SD and correlation at lag ρ over interior nodes of a lattice
/// extending 3ρ each side of its centre.
fn matern_check(rho: f64, sigma: f64, h: f64, seed: u64) -> (f64, f64, f64, f64) {
    let n = (6.0 * rho / h).round() as usize;
    let lat = Lattice {
        origin_lon: 0.0,
        origin_lat: 0.0,
        spacing: h,
        ncols: n,
        nrows: n,
    };
    let hyper = FieldHyperparams::new(rho, sigma).unwrap();
    let sampler = FieldSampler::new(spde_precision(&lat, &hyper).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lag = (rho / h).round() as usize;
    let margin = (1.5 * rho / h).round() as usize;
    let interior: Vec<(usize, usize)> = (margin..n - margin - lag)
        .step_by(2)
        .flat_map(|r| (margin..n - margin - lag).step_by(2).map(move |c| (r, c)))
        .collect();
    let (mut ss, mut sp, mut count) = (0.0, 0.0, 0.0);
    for _ in 0..2000 {
        let x = sampler.draw(&mut rng);
        for &(r, c) in &interior {
            let a = x[lat.index(r, c)];
            let b = x[lat.index(r, c + lag)];
            let b2 = x[lat.index(r + lag, c)];
            ss += a * a;
            sp += 0.5 * (a * b + a * b2);
            count += 1.0;
        }
    }
    let var = ss / count;
    (rho, sigma, var.sqrt(), sp / count / var)
}

// ---------------------------------------------------------------- shared scenario

/// First grid from `seed` upwards whose every state × urban/rural stratum
/// has at least twice the PSUs the design draws from it.
fn scenario_grid(urban_share: f64, urban_pop: f64, rural_pop: f64, seed: u64, design: &SurveyDesign) -> PopulationGrid {
    let spec = SyntheticGridSpec {
        ncols: 40,
        nrows: 40,
        cellsize: 0.15,
        states: 10,
        lgas_per_state: 3,
        urban_share,
        urban_pop,
        rural_pop,
        ..SyntheticGridSpec::default()
    };
    (seed..)
        .map(|s| synthetic_grid(&spec, s).unwrap())
        .find(|grid| {
            let mut counts: BTreeMap<(&str, bool), usize> = BTreeMap::new();
            for c in &grid.cells {
                *counts.entry((grid.state_of(c).unwrap(), c.urban)).or_default() += 1;
            }
            counts.len() == 2 * spec.states
                && counts.iter().all(|(&(_, urban), &n)| {
                    n >= 2 * if urban { design.psus_urban } else { design.psus_rural }
                })
        })
        .unwrap()
}

fn grid_bbox(grid: &PopulationGrid) -> BoundingBox {
    BoundingBox::enclosing(grid.points()).unwrap()
}

fn model_spec(class: ModelClass, include_strata: bool, grid: &PopulationGrid) -> ModelSpec {
    ModelSpec {
        class,
        include_strata,
        covariate_names: grid.covariate_names.clone(),
        priors: PriorSpec::for_domain(&grid_bbox(grid)),
    }
}

/// Fitting lattice covering the whole grid, padded by the prior range.
fn fit_lattice(grid: &PopulationGrid, spec: &ModelSpec) -> Lattice {
    build_lattice(&grid_bbox(grid), FIT_SPACING, spec.priors.rho_median, 50_000).unwrap()
}

fn truth_params(class: ModelClass, gamma: f64, sigma_s: f64) -> TruthParams {
    TruthParams {
        alpha: -0.5,
        beta: vec![1.0],
        gamma: Some(gamma),
        rho: 2.0,
        sigma_s,
        d: (class == ModelClass::BetaBinomialOd).then_some(3.0),
        sigma_nugget: class.has_nugget().then_some(0.73),
    }
}

fn national_truth(truth: &SyntheticTruth) -> f64 {
    let pop: f64 = truth.grid.cells.iter().map(|c| c.pop).sum();
    truth.grid.cells.iter().zip(&truth.p_true).map(|(c, p)| c.pop * p).sum::<f64>() / pop
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let design = SurveyDesign {
        psus_urban: 15,
        psus_rural: 15,
        ..SurveyDesign::default()
    };
    let grid = scenario_grid(0.3, 400.0, 100.0, 11, &design);
    let replicates = 20;
    let start = Instant::now();
    let mut pass = true;
    let mut parts = vec![];
    for (ci, class) in ModelClass::ALL.into_iter().enumerate() {
        let params = truth_params(class, 0.35, 1.0);
        let spec = model_spec(class, true, &grid);
        let lattice = fit_lattice(&grid, &spec);
        let third = match class {
            ModelClass::BetaBinomialOd => Some(("d", 3.0)),
            ModelClass::LonoBinomialOd | ModelClass::BinomialTs => Some(("σ_nugget", 0.73)),
            ModelClass::BinomialNn => None,
        };
        let mut covered = [0usize; 3];
        let (mut max_rhat, mut min_ess) = (0.0f64, f64::INFINITY);
        let mut n_clusters = 0;
        for r in 0..replicates {
            let key = (ci * replicates + r) as u64;
            let truth = simulate_truth(&grid, &params, class, derive(BASE_SEED, Stream::Truth, key)).unwrap();
            let data = draw_survey(&truth, &design, derive(BASE_SEED, Stream::Survey, key)).unwrap();
            n_clusters = data.len();
            let mcmc = McmcConfig::with_seed(derive(BASE_SEED, Stream::Chain, key));
            let draws = fit(&spec, &data, &lattice, &mcmc).unwrap();
            let inside = |v: &[f64], t: f64| {
                let (lo, hi) = ci95(v);
                usize::from(lo <= t && t <= hi)
            };
            covered[0] += inside(&draws.alpha, params.alpha);
            covered[1] += inside(draws.gamma.as_ref().unwrap(), 0.35);
            if let Some((_, t)) = third {
                let v = draws.d.as_ref().or(draws.sigma_nugget.as_ref()).unwrap();
                covered[2] += inside(v, t);
            }
            max_rhat = max_rhat.max(draws.diagnostics.max_rhat().unwrap_or(f64::INFINITY));
            min_ess = min_ess.min(draws.diagnostics.min_ess());
        }
        let scalars = if third.is_some() { 3 } else { 2 };
        let ok = covered[..scalars].iter().all(|&c| c >= 17) && max_rhat < 1.05 && min_ess > 100.0;
        pass &= ok;
        parts.push(format!(
            "{class} ({n_clusters} clusters): α {}/20, γ {}/20{}, max R-hat {max_rhat:.3}, min ESS {min_ess:.0}",
            covered[0],
            covered[1],
            third.map_or(String::new(), |(name, _)| format!(", {name} {}/20", covered[2])),
        ));
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    pass &= minutes < 30.0;
    parts.push(format!("{minutes:.1} min"));
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 5

fn national_median(draws: &PosteriorDraws, grid: &PopulationGrid, seed: u64) -> f64 {
    let cells = predict_cells(draws, grid, seed).unwrap();
    let national = aggregate(&cells, &aggregation_weights(grid, Level::National).unwrap()).unwrap();
    median(&national.row(0))
}

fn criterion_5() -> Outcome {
    // equal cell populations put 30% of people in urban cells; 18 of 30
    // PSUs per state are urban, twice that share
    let design = SurveyDesign {
        psus_urban: 18,
        psus_rural: 12,
        ..SurveyDesign::default()
    };
    let grid = scenario_grid(0.3, 100.0, 100.0, 23, &design);
    let pop: f64 = grid.cells.iter().map(|c| c.pop).sum();
    let urban_pop: f64 = grid.cells.iter().filter(|c| c.urban).map(|c| c.pop).sum();
    let class = ModelClass::BinomialNn;
    let params = TruthParams {
        gamma: Some(0.5),
        ..truth_params(class, 0.5, 0.5)
    };
    let strata = model_spec(class, true, &grid);
    let plain = model_spec(class, false, &grid);
    let lattice = fit_lattice(&grid, &strata);
    let replicates = 20;
    let (mut bias_s, mut bias_p, mut waic_wins) = (0.0, 0.0, 0);
    for r in 0..replicates {
        let key = 1000 + r as u64;
        let truth = simulate_truth(&grid, &params, class, derive(BASE_SEED, Stream::Truth, key)).unwrap();
        let data = draw_survey(&truth, &design, derive(BASE_SEED, Stream::Survey, key)).unwrap();
        let truth_nat = national_truth(&truth);
        let mcmc = McmcConfig {
            chains: 4,
            iterations: 3000,
            burn_in: 1000,
            thin: 2,
            seed: derive(BASE_SEED, Stream::Chain, key),
        };
        let fs = fit(&strata, &data, &lattice, &mcmc).unwrap();
        let fp = fit(&plain, &data, &lattice, &mcmc).unwrap();
        bias_s += (national_median(&fs, &grid, key) - truth_nat).abs();
        bias_p += (national_median(&fp, &grid, key) - truth_nat).abs();
        if waic(&fs, &data).unwrap().waic < waic(&fp, &data).unwrap().waic {
            waic_wins += 1;
        }
    }
    let (bs, bp) = (bias_s / replicates as f64, bias_p / replicates as f64);
    let pass = bs <= bp / 3.0 && waic_wins >= 16;
    outcome(
        pass,
        format!(
            "urban population share {:.3}, urban sample share 0.600; mean |national bias| strata {bs:.4} vs no-strata {bp:.4} (ratio {:.2}); WAIC strata < no-strata in {waic_wins}/20",
            urban_pop / pop,
            bs / bp
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let design = SurveyDesign {
        psus_urban: 15,
        psus_rural: 15,
        ..SurveyDesign::default()
    };
    let grid = scenario_grid(0.3, 400.0, 100.0, 11, &design);
    let params = truth_params(ModelClass::LonoBinomialOd, 0.35, 1.0);
    let nn = model_spec(ModelClass::BinomialNn, true, &grid);
    let lono = model_spec(ModelClass::LonoBinomialOd, true, &grid);
    let lattice = fit_lattice(&grid, &nn);
    let replicates = 20;
    let (mut range_wins, mut mae_wins) = (0, 0);
    let mut ranges = vec![];
    let mut maes = vec![];
    for r in 0..replicates {
        let key = 2000 + r as u64;
        let truth =
            simulate_truth(&grid, &params, ModelClass::LonoBinomialOd, derive(BASE_SEED, Stream::Truth, key)).unwrap();
        let data = draw_survey(&truth, &design, derive(BASE_SEED, Stream::Survey, key)).unwrap();
        let mcmc = McmcConfig {
            chains: 4,
            iterations: 3000,
            burn_in: 1000,
            thin: 2,
            seed: derive(BASE_SEED, Stream::Chain, key),
        };
        let rho_nn = median(&fit(&nn, &data, &lattice, &mcmc).unwrap().rho);
        let rho_lono = median(&fit(&lono, &data, &lattice, &mcmc).unwrap().rho);
        if rho_nn < rho_lono {
            range_wins += 1;
        }
        // the MAE gap between the two models is about 0.001, so fold
        // posteriors need enough draws to keep the Monte Carlo error of
        // the cluster medians well below that
        let cv = McmcConfig {
            chains: 4,
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            seed: derive(BASE_SEED, Stream::Fold, key),
        };
        let mae_nn = loso_cv(&nn, &data, &lattice, &cv).unwrap().pooled.mae;
        let mae_lono = loso_cv(&lono, &data, &lattice, &cv).unwrap().pooled.mae;
        if mae_lono <= mae_nn {
            mae_wins += 1;
        }
        ranges.push((rho_nn, rho_lono));
        maes.push((mae_nn, mae_lono));
    }
    let mean = |v: &[(f64, f64)], first: bool| {
        v.iter().map(|p| if first { p.0 } else { p.1 }).sum::<f64>() / v.len() as f64
    };
    let pass = range_wins >= 16 && mae_wins >= 16;
    outcome(
        pass,
        format!(
            "range median NN < Lono in {range_wins}/20 (mean {:.2}° vs {:.2}°); LOSO MAE Lono ≤ NN in {mae_wins}/20 (mean {:.4} vs {:.4})",
            mean(&ranges, true),
            mean(&ranges, false),
            mean(&maes, false),
            mean(&maes, true)
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let design = SurveyDesign {
        psus_urban: 15,
        psus_rural: 15,
        ..SurveyDesign::default()
    };
    let grid = scenario_grid(0.3, 400.0, 100.0, 11, &design);
    let params = truth_params(ModelClass::LonoBinomialOd, 0.35, 1.0);
    let key = 3000;
    let truth =
        simulate_truth(&grid, &params, ModelClass::LonoBinomialOd, derive(BASE_SEED, Stream::Truth, key)).unwrap();
    let data = draw_survey(&truth, &design, derive(BASE_SEED, Stream::Survey, key)).unwrap();
    let lono = model_spec(ModelClass::LonoBinomialOd, true, &grid);
    let ts = model_spec(ModelClass::BinomialTs, true, &grid);
    let lattice = fit_lattice(&grid, &lono);
    let mcmc = McmcConfig {
        chains: 4,
        iterations: 4000,
        burn_in: 1000,
        thin: 1,
        seed: derive(BASE_SEED, Stream::Chain, key),
    };
    let a = fit(&lono, &data, &lattice, &mcmc).unwrap();
    let b = fit(&ts, &data, &lattice, &mcmc).unwrap();
    let identical = a.alpha == b.alpha
        && a.beta == b.beta
        && a.gamma == b.gamma
        && a.rho == b.rho
        && a.sigma_s == b.sigma_s
        && a.sigma_nugget == b.sigma_nugget;
    let all = a.len();
    let pa = predict_cells_with(&a, &grid, all, key).unwrap();
    let pb = predict_cells_with(&b, &grid, all, key).unwrap();
    let mut max_diff: f64 = 0.0;
    let mut wider = 0;
    for g in 0..pa.units() {
        let (ra, rb) = (pa.row(g), pb.row(g));
        let (ma, va) = mean_var(&ra);
        let (mb, vb) = mean_var(&rb);
        max_diff = max_diff.max((ma - mb).abs());
        if vb > va {
            wider += 1;
        }
    }
    let share = wider as f64 / pa.units() as f64;
    let pass = identical && max_diff <= 0.01 && share > 0.95;
    outcome(
        pass,
        format!(
            "hyperparameter draws identical: {identical} ({all} draws); max |mean diff| {max_diff:.4}; TS variance > Lono on {:.1}% of {} cells",
            100.0 * share,
            pa.units()
        ),
    )
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

// ---------------------------------------------------------------- 8

fn random_draws(rng: &mut ChaCha8Rng, breaks: &[f64]) -> CoverageDraws {
    let a = rng.random_range(2..8);
    let m = rng.random_range(5..30);
    let values = Array2::from_shape_fn((a, m), |_| {
        if rng.random_bool(0.15) {
            // land exactly on a breakpoint now and then
            breaks[rng.random_range(0..breaks.len())]
        } else {
            rng.random::<f64>()
        }
    });
    let ids = (0..a).map(|i| format!("u{i}")).collect();
    CoverageDraws::new(ids, values, Level::State, ModelClass::BinomialNn).unwrap()
}

/// Direct counting: a value belongs to interval `k` when exactly `k` interior
/// breakpoints are ≤ it.
fn brute_force_classes(draws: &CoverageDraws, breaks: &[f64]) -> (Vec<usize>, Vec<f64>, f64) {
    let k = breaks.len() - 1;
    let m = draws.draws() as f64;
    let mut assigned = vec![];
    let mut tcp = vec![];
    for i in 0..draws.units() {
        let mut counts = vec![0usize; k];
        for v in draws.row(i) {
            let idx = breaks[1..k].iter().filter(|&&b| b <= v).count();
            counts[idx] += 1;
        }
        let max = *counts.iter().max().unwrap();
        assigned.push(counts.iter().position(|&c| c == max).unwrap());
        tcp.push(max as f64 / m);
    }
    let atcp = tcp.iter().sum::<f64>() / tcp.len() as f64;
    (assigned, tcp, atcp)
}

fn criterion_8() -> Outcome {
    let (checks, fast, secs) = timed(10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
        let mut oracle = 0;
        let mut refine = 0;
        let mut single = 0;
        let mut er = 0;
        let mut exceed = 0;
        for _ in 0..10 {
            let k = rng.random_range(2..6);
            let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.05..0.95)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let partition = Partition::from_thresholds(&cuts).unwrap();
            let draws = random_draws(&mut rng, partition.breaks());
            let map = classify(&draws, &partition);
            let (assigned, tcp, atcp) = brute_force_classes(&draws, partition.breaks());
            if map.assigned == assigned && map.tcp == tcp && map.atcp == atcp {
                oracle += 1;
            }

            let pooled = pooled_draws(&draws);
            if let (Ok(p2), Ok(p4)) = (quantile_partition(&pooled, 2), quantile_partition(&pooled, 4)) {
                let (m2, m4) = (classify(&draws, &p2), classify(&draws, &p4));
                if m4.tcp.iter().zip(&m2.tcp).all(|(a, b)| a <= b) && m4.atcp <= m2.atcp {
                    refine += 1;
                }
            } else {
                refine += 1;
            }

            if classify(&draws, &Partition::new(vec![0.0, 1.0]).unwrap()).atcp == 1.0 {
                single += 1;
            }

            let a = draws.units() as f64;
            let ranks = rank_distribution(&draws).unwrap();
            if (ranks.expected.iter().sum::<f64>() - a * (a + 1.0) / 2.0).abs() <= 1e-9 {
                er += 1;
            }

            let grid: Vec<Vec<f64>> = (0..=20).map(|t| exceedance(&draws, t as f64 / 20.0).unwrap()).collect();
            if grid.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(lo, hi)| hi <= lo)) {
                exceed += 1;
            }
        }

        // the ATCPs of the worked example: 0.87, 0.76, 0.67 for K = 2, 3, 4
        let engineered = [(1, Some(1.0)), (2, Some(0.87)), (3, Some(0.76)), (4, Some(0.67))];
        let chosen = select_k(&engineered, 0.70);
        let draws = engineered_draws();
        let g = select_granularity(&draws, 0.70, 4).unwrap();
        let consistent = g.k == select_k(&g.atcps, 0.70) && g.map.atcp >= 0.70;
        (oracle, refine, single, er, exceed, chosen, g.k, g.atcps, consistent)
    });
    let (oracle, refine, single, er, exceed, chosen, draws_k, atcps, consistent) = checks;
    let pass = oracle == 10 && refine == 10 && single == 10 && er == 10 && exceed == 10 && chosen == 3 && draws_k == 3 && consistent && fast;
    let atcp_text: Vec<String> = atcps
        .iter()
        .map(|(k, a)| format!("K={k}:{}", a.map_or("-".into(), |a| format!("{a:.3}"))))
        .collect();
    outcome(
        pass,
        format!(
            "oracle {oracle}/10, refinement {refine}/10, K=1 {single}/10, ER sum {er}/10, exceedance {exceed}/10; engineered 0.87/0.76/0.67 at floor 0.70 → K={chosen}; draw-level scenario ({}) → K={draws_k}; {secs:.2}s",
            atcp_text.join(" ")
        ),
    )
}

/// Forty units with centres spread over (0.2, 0.8) and Gaussian draw noise,
/// tuned so that ATCP crosses 0.70 between K = 3 and K = 4 as in the
/// worked example.
fn engineered_draws() -> CoverageDraws {
    let (a, m) = (40, 400);
    let noise: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..a * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let values = Array2::from_shape_fn((a, m), |(i, j)| {
        let centre = 0.2 + 0.6 * (i as f64 + 0.5) / a as f64;
        (centre + 0.09 * noise[i * m + j]).clamp(0.0, 1.0)
    });
    let ids = (0..a).map(|i| format!("a{i:02}")).collect();
    CoverageDraws::new(ids, values, Level::State, ModelClass::BinomialNn).unwrap()
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    for class in ModelClass::ALL {
        let (draws, data) = common::tiny_draws(class);
        let got = waic(&draws, &data).unwrap().waic;
        worst = worst.max((got - common::brute_force_waic(&draws, &data)).abs());
    }
    // exact predictions, then a constant 0.5 against 3/8 and 5/8, then a
    // mixed set; all values are dyadic so the sums carry no round-off
    let mut data = common::clusters(4);
    let exact: Vec<f64> = data.iter().map(|c| c.fraction()).collect();
    let zero = metrics(&prediction_errors(&exact, &data));
    for (c, y) in data.iter_mut().zip([3, 5, 3, 5]) {
        c.n = 8;
        c.y = y;
    }
    let half = metrics(&prediction_errors(&[0.5; 4], &data));
    let mixed = metrics(&[0.25, -0.5, 0.125, 0.125]);
    let decimal = metrics(&[0.5 - 0.4, 0.5 - 0.6]);
    let identities = (zero.bias, zero.mae, zero.rmse) == (0.0, 0.0, 0.0)
        && (half.bias, half.mae, half.rmse) == (0.0, 0.125, 0.125)
        && (mixed.bias, mixed.mae, mixed.rmse) == (0.0, 0.25, 0.0859375f64.sqrt())
        && mixed.rmse >= mixed.mae
        && decimal.bias.abs() <= 1e-15
        && (decimal.mae - 0.1).abs() <= 1e-15
        && (decimal.rmse - 0.1).abs() <= 1e-15;
    let pass = worst <= 1e-8 && identities;
    outcome(
        pass,
        format!("max |WAIC − brute force| = {worst:.2e} over 4 classes; metric identities exact: {identities}"),
    )
}

// ---------------------------------------------------------------- 10

fn digest_dir(dir: &Path, prefix: &str, out: &mut BTreeMap<String, String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = format!("{prefix}{}", path.file_name().unwrap().to_string_lossy());
        if path.is_dir() {
            digest_dir(&path, &format!("{name}/"), out);
        } else {
            out.insert(name, hex::encode(Sha256::digest(fs::read(&path).unwrap())));
        }
    }
}

/// Runs every stage from grid synthesis to validation, writing each
/// artefact into `dir`.
fn pipeline(dir: &Path, seed: u64) {
    let spec = SyntheticGridSpec {
        ncols: 20,
        nrows: 16,
        cellsize: 0.25,
        states: 4,
        lgas_per_state: 2,
        urban_share: 0.3,
        ..SyntheticGridSpec::default()
    };
    let grid = synthetic_grid(&spec, derive(seed, Stream::Grid, 0)).unwrap();
    for class in ModelClass::ALL {
        let stem = class.name();
        let params = truth_params(class, 0.4, 0.8);
        let truth = simulate_truth(&grid, &params, class, derive(seed, Stream::Truth, 0)).unwrap();
        write_truth(dir.join(format!("truth-{stem}")), &truth).unwrap();
        let design = SurveyDesign {
            psus_urban: 3,
            psus_rural: 3,
            ..SurveyDesign::default()
        };
        let data: Vec<ClusterObservation> = draw_survey(&truth, &design, derive(seed, Stream::Survey, 0)).unwrap();
        save_clusters(dir.join(format!("{stem}-clusters.csv")), &data, &grid.covariate_names).unwrap();
        let ms = model_spec(class, true, &grid);
        let lattice = build_lattice(&grid_bbox(&grid), 0.5, 1.0, 50_000).unwrap();
        let mcmc = McmcConfig {
            chains: 2,
            iterations: 400,
            burn_in: 200,
            thin: 2,
            seed,
        };
        let draws = fit(&ms, &data, &lattice, &mcmc).unwrap();
        write_fit(dir.join(format!("{stem}.vaxfit")), &draws).unwrap();
        let cells = predict_cells(&draws, &grid, seed).unwrap();
        write_coverage_draws(dir.join(format!("{stem}-cells.vaxdraws")), &cells).unwrap();
        let states = aggregate(&cells, &aggregation_weights(&grid, Level::State).unwrap()).unwrap();
        write_coverage_draws(dir.join(format!("{stem}-states.vaxdraws")), &states).unwrap();
        write_summary_csv(dir.join(format!("{stem}-summary.csv")), &summarize(&states, 0.95).unwrap()).unwrap();
        let ex = exceedance(&states, 0.5).unwrap();
        write_exceedance_csv(dir.join(format!("{stem}-exceed.csv")), &states.unit_ids, &[(0.5, ex)]).unwrap();
        write_rank_csv(dir.join(format!("{stem}-rank.csv")), &rank_distribution(&states).unwrap()).unwrap();
        export_ridgeline(dir.join(format!("{stem}-ridge.csv")), &states).unwrap();
        let g = select_granularity(&states, 0.6, 4).unwrap();
        write_classified_csv(dir.join(format!("{stem}-classes.csv")), &g.map).unwrap();
        let palette = default_palette(g.k);
        render(&g.map, &grid, &palette, dir, &format!("{stem}-map")).unwrap();
        let cv = McmcConfig {
            iterations: 300,
            burn_in: 150,
            ..mcmc
        };
        let report = loso_cv(&ms, &data, &lattice, &cv).unwrap();
        write_report_csv(dir.join(format!("{stem}-cv.csv")), &report).unwrap();
    }
}

fn criterion_10() -> Outcome {
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pipeline(dir.path(), BASE_SEED));
        let mut all = BTreeMap::new();
        digest_dir(dir.path(), "", &mut all);
        all
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let differing: Vec<&String> = a
        .keys()
        .filter(|k| b.get(*k) != a.get(*k) || c.get(*k) != a.get(*k))
        .collect();
    let pass = !a.is_empty() && a.len() == b.len() && a.len() == c.len() && differing.is_empty();
    outcome(
        pass,
        format!(
            "{} artefacts compared across two 1-thread runs and one 4-thread run; differing: {:?}",
            a.len(),
            differing
        ),
    )
}
