use vaxmap_core::coverage_models::ModelClass;
use vaxmap_core::rng::{derive, Stream};
use vaxmap_core::simulator::{draw_survey, simulate_truth, synthetic_grid, SurveyDesign, SyntheticGridSpec, TruthParams};
use vaxmap_core::stats::logit;
use vaxmap_core::survey_data::{
    load_population_grid, save_population_grid, AreaId, GridCell, GridPaths, PopulationGrid, RasterGeometry,
};

/// One state with a single urban and a single rural cell, so every survey
/// visits both cells.
fn two_cell_grid() -> PopulationGrid {
    let geometry = RasterGeometry {
        ncols: 2,
        nrows: 1,
        xllcorner: 0.0,
        yllcorner: 0.0,
        cellsize: 1.0,
    };
    let cell = |col: usize, urban: bool| {
        let (lon, lat) = geometry.cell_center(0, col);
        GridCell {
            row: 0,
            col,
            lon,
            lat,
            pop: 100.0,
            urban,
            covariates: vec![0.3],
            area: Some(0),
        }
    };
    PopulationGrid {
        geometry,
        covariate_names: vec!["x1".into()],
        areas: vec![AreaId {
            code: 1,
            state_id: "S01".into(),
            lga_id: "S01-L01".into(),
        }],
        cells: vec![cell(0, true), cell(1, false)],
    }
}

#[test]
fn replicate_surveys_converge_to_the_target() {
    let grid = two_cell_grid();
    let design = SurveyDesign {
        psus_urban: 1,
        psus_rural: 1,
        ..SurveyDesign::default()
    };
    for class in ModelClass::ALL {
        let params = TruthParams {
            alpha: 0.4,
            beta: vec![0.5],
            gamma: Some(0.8),
            rho: 1.0,
            sigma_s: 0.5,
            d: class.has_dispersion().then_some(3.0),
            sigma_nugget: class.has_nugget().then_some(0.9),
        };
        let truth = simulate_truth(&grid, &params, class, 17).unwrap();
        let mut sums = [(0u64, 0u64); 2];
        for r in 0..4000 {
            for c in draw_survey(&truth, &design, derive(99, Stream::Survey, r)).unwrap() {
                let k = usize::from(!c.urban);
                sums[k].0 += c.y as u64;
                sums[k].1 += c.n as u64;
            }
        }
        for (k, (y, n)) in sums.iter().enumerate() {
            let got = *y as f64 / *n as f64;
            let p = truth.p_true[k];
            // binomial SE on ~18k trials, inflated for overdispersion
            let se = (p * (1.0 - p) / *n as f64).sqrt() * if class == ModelClass::BinomialNn { 1.0 } else { 3.0 };
            assert!((got - p).abs() < 4.0 * se, "{class} cell {k}: {got} vs {p}");
        }
    }
}

#[test]
fn field_variance_matches_sigma() {
    let spec = SyntheticGridSpec {
        ncols: 40,
        nrows: 40,
        cellsize: 0.25,
        states: 4,
        lgas_per_state: 2,
        ..SyntheticGridSpec::default()
    };
    let grid = synthetic_grid(&spec, 1).unwrap();
    let params = TruthParams {
        alpha: 0.0,
        beta: vec![0.0],
        gamma: None,
        rho: 1.5,
        sigma_s: 0.8,
        d: None,
        sigma_nugget: None,
    };
    let mut total = 0.0;
    let mut count = 0.0;
    for seed in 0..40 {
        let t = simulate_truth(&grid, &params, ModelClass::BinomialNn, seed).unwrap();
        for p in &t.p_true {
            total += logit(*p).powi(2);
            count += 1.0;
        }
    }
    let var = total / count;
    assert!((var / 0.64 - 1.0).abs() < 0.2, "logit variance {var}");
}

#[test]
fn synthetic_grid_survives_a_disk_round_trip() {
    let grid = synthetic_grid(&SyntheticGridSpec::default(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = GridPaths::in_dir(dir.path(), &grid.covariate_names);
    save_population_grid(&grid, &paths).unwrap();
    let back = load_population_grid(&paths).unwrap();
    assert_eq!(grid, back);
    save_population_grid(&back, &paths).unwrap();
    assert_eq!(load_population_grid(&paths).unwrap(), back);
}

#[test]
fn urban_oversampling_biases_the_pooled_mean() {
    let spec = SyntheticGridSpec {
        ncols: 40,
        nrows: 40,
        states: 10,
        // urban cells hold a quarter of the population, equal PSU counts
        // put half the sample there
        urban_share: 0.2,
        urban_pop: 200.0,
        rural_pop: 150.0,
        ..SyntheticGridSpec::default()
    };
    let grid = synthetic_grid(&spec, 8).unwrap();
    let params = TruthParams {
        alpha: -0.5,
        beta: vec![0.0],
        gamma: Some(1.0),
        rho: 2.0,
        sigma_s: 0.3,
        d: None,
        sigma_nugget: None,
    };
    let truth = simulate_truth(&grid, &params, ModelClass::BinomialNn, 9).unwrap();
    let pop: f64 = grid.cells.iter().map(|c| c.pop).sum();
    let national: f64 = grid.cells.iter().zip(&truth.p_true).map(|(c, p)| c.pop * p).sum::<f64>() / pop;
    let design = SurveyDesign {
        psus_urban: 8,
        psus_rural: 8,
        ..SurveyDesign::default()
    };
    let mut bias = 0.0;
    for r in 0..20 {
        let data = draw_survey(&truth, &design, r).unwrap();
        let (y, n) = data.iter().fold((0u32, 0u32), |(y, n), c| (y + c.y, n + c.n));
        bias += y as f64 / n as f64 - national;
    }
    assert!(bias / 20.0 > 0.03, "mean bias {}", bias / 20.0);
}
