use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scosara_core::baselines::uniform_selection;
use scosara_core::fim::Sampling;
use scosara_core::model::{ForwardModel, Roi, Scatterer};
use scosara_core::recovery::*;
use scosara_core::C64;

fn desk_grid(model: &ForwardModel) -> RoiGrid {
    let roi = Roi {
        x_min: -1.5e-3,
        x_max: 1.5e-3,
        z_min: 12.5e-3,
        z_max: 15.5e-3,
    };
    RoiGrid::half_wavelength(&roi, &model.pulse).unwrap()
}

fn identity(n: usize) -> Dictionary {
    Dictionary::from_columns(
        (0..n)
            .map(|g| (0..n).map(|r| C64::new(f64::from(u8::from(r == g)), 0.0)).collect())
            .collect(),
    )
    .unwrap()
}

#[test]
fn orthonormal_dictionary_has_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = identity(12);
    let y: Vec<C64> = (0..12).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let lambda = 0.4;
    let one = fista(&d, &y, lambda, 1).unwrap();
    let l = one.lipschitz;
    assert!((l - LIPSCHITZ_MARGIN).abs() < 1e-12);
    for (x, v) in one.coeffs.iter().zip(&y) {
        assert!((x - soft_threshold(v / l, lambda / l)).norm() < 1e-15);
    }
    let done = fista(&d, &y, lambda, 2000).unwrap();
    for (x, v) in done.coeffs.iter().zip(&y) {
        assert!((x - soft_threshold(*v, lambda)).norm() < 1e-8);
    }
}

#[test]
fn zero_weight_gives_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let base = C64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        if i == j { base + 2.0 } else { base }
    });
    let cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    let d = Dictionary::from_columns(cols).unwrap();
    let y: Vec<C64> = (0..n).map(|_| C64::new(rng.random(), rng.random())).collect();
    // oracle on the normalized dictionary
    let an = DMatrix::from_fn(n, n, |i, j| d.column(j)[i]);
    let x = an.lu().solve(&DVector::from_vec(y.clone())).unwrap();
    let got = fista(&d, &y, 0.0, 2000).unwrap();
    let err = got.coeffs.iter().zip(x.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn single_on_grid_scatterer_has_exact_support() {
    let model = ForwardModel::desk_default();
    let grid = desk_grid(&model);
    let g = grid.index(7, 9);
    let (x, z) = grid.point(g);
    let s = [Scatterer::new(x, z, 1.0, 0.4)];
    let d = build_dictionary(&grid, &model, &Sampling::Full).unwrap();
    let y = measurements(&model, &s, &Sampling::Full).unwrap();
    let res = fista(&d, &y, default_lambda(&d, &y), 2000).unwrap();
    let (eps, l0) = metrics(&res.coeffs, &truth_image(&grid, &s), 1e-3).unwrap();
    assert_eq!(l0, 1);
    assert!(eps < 1e-12);
    let peak = (0..grid.len()).max_by(|&a, &b| res.coeffs[a].norm().total_cmp(&res.coeffs[b].norm())).unwrap();
    assert_eq!(peak, g);
}

#[test]
fn pair_scenario_converges_and_descends() {
    let model = ForwardModel::desk_default();
    let grid = desk_grid(&model);
    let layout = model.layout();
    let sel = uniform_selection(&[5, 5, 2], &layout).unwrap();
    let sampling = Sampling::Structured(sel);
    let d = build_dictionary(&grid, &model, &sampling).unwrap();
    for sep in [2, 3, 4] {
        let pair = pair_scenario(&grid, sep).unwrap();
        let (i0, i1) = (grid.nearest(pair[0].x, pair[0].z), grid.nearest(pair[1].x, pair[1].z));
        assert_eq!(i1 - i0, sep * grid.xs().len());
        let y = measurements(&model, &pair, &sampling).unwrap();
        let lambda = default_lambda(&d, &y);
        let res = fista(&d, &y, lambda, 2000).unwrap();
        let half_y: f64 = 0.5 * y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        assert!(*res.objective.last().unwrap() <= half_y);
        let r = fixed_point_residual(&d, &y, &res.coeffs, lambda, res.lipschitz);
        assert!(r < 1e-6, "separation {sep}: residual {r}");
    }
}

#[test]
fn renormalized_columns_after_selection() {
    let model = ForwardModel::desk_default();
    let grid = desk_grid(&model);
    let sel = uniform_selection(&[2, 3, 4], &model.layout()).unwrap();
    let d = build_dictionary(&grid, &model, &Sampling::Structured(sel)).unwrap();
    assert_eq!(d.rows(), 24);
    for g in 0..d.cols() {
        let n: f64 = d.column(g).iter().map(|v| v.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
