use proptest::prelude::*;

use sde_lab_core::bounds::{
    check_hoeldercomp, check_lemma21, hoeldercomp_k, hoeldercomp_log_k, kappa_t, sandwich_check, HoelderCompParams, KappaSchedule,
    Lemma21Params,
};
use sde_lab_core::bump::BumpFunction;
use sde_lab_core::model::{GeneralModel, ModelParams};
use sde_lab_core::montecarlo::{fit_exponent_raw, MonteCarlo};
use sde_lab_core::paths::{sample_brownian, TimeGrid};
use sde_lab_core::solvers::{solve_cascade, solve_general_cascade, Solver};

fn general_model(dim: usize, shift: Vec<f64>, direction: Vec<f64>) -> Option<GeneralModel> {
    let mut p = ModelParams::axis_aligned(4, dim);
    p.shift = shift;
    p.direction = direction;
    GeneralModel::from_params(p).ok()
}

fn vector(dim: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bump_is_supported_and_peaks_at_midpoint(a in -2.0f64..2.0, len in 0.2f64..3.0, u in -0.5f64..1.5) {
        let bump = BumpFunction::normalized(a, a + len).unwrap();
        let t = a + u * len;
        let v = bump.value(t);
        prop_assert!(v >= 0.0);
        if !(0.0..=1.0).contains(&u) {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(bump.deriv1(t), 0.0);
            prop_assert_eq!(bump.deriv2(t), 0.0);
        }
        prop_assert!(v <= bump.value(bump.midpoint()) * (1.0 + 1e-12));
    }

    #[test]
    fn base_coordinates_round_trip(
        (dim, shift, direction, y) in (5usize..9).prop_flat_map(|d| (Just(d), vector(d, 3.0), vector(d, 2.0), vector(d, 4.0)))
    ) {
        let Some(model) = general_model(dim, shift, direction) else { return Ok(()) };
        let x = model.from_base(&y);
        let back = model.to_base(x.as_slice());
        for (a, b) in back.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        // B = ‖δ‖A with A orthogonal.
        let a = model.a();
        let eye = a.transpose() * a;
        prop_assert!((eye - nalgebra::DMatrix::identity(dim, dim)).norm() < 1e-12);
        prop_assert!((model.b() - a * model.delta_norm()).norm() < 1e-12 * model.delta_norm().max(1.0));
    }

    #[test]
    fn lyapunov_dominates_norm(
        (dim, shift, direction, x) in (5usize..8).prop_flat_map(|d| (Just(d), vector(d, 2.0), vector(d, 2.0), vector(d, 6.0)))
    ) {
        let Some(model) = general_model(dim, shift, direction) else { return Ok(()) };
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= model.lyapunov(&x));
    }

    #[test]
    fn kappa_is_nondecreasing(t1 in 0.5f64..1.0, t2 in 0.5f64..1.0) {
        let f = BumpFunction::normalized(0.5, 1.0).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(kappa_t(&f, 0.5, lo).unwrap() <= kappa_t(&f, 0.5, hi).unwrap() + 1e-15);
    }

    #[test]
    fn comparison_constant_is_valid(c in 0.1f64..20.0, alpha in 0.05f64..3.0, beta in 0.05f64..0.95, r_max in 1e-3f64..20.0) {
        let prm = HoelderCompParams::new(c, r_max, alpha, beta).unwrap();
        let log_k = hoeldercomp_log_k(&prm).unwrap();
        prop_assert!(log_k.is_finite() && log_k <= 0.0);
        prop_assert_eq!(hoeldercomp_k(&prm).unwrap(), log_k.exp());
        let report = check_hoeldercomp(&prm, 2_000).unwrap();
        prop_assert!(report.passed, "{}", report.to_json());
    }

    #[test]
    fn power_laws_fit_exactly(a in 0.1f64..4.0, scale in 0.01f64..100.0, step in 0.1f64..2.0) {
        let eps: Vec<f64> = (1..6).map(|k| (-(k as f64) * step).exp()).collect();
        let m: Vec<f64> = eps.iter().map(|e| scale * e.powf(a)).collect();
        for s in fit_exponent_raw(&eps, &m, 3).unwrap() {
            prop_assert!((s - a).abs() < 1e-9);
        }
    }

    #[test]
    fn coarsening_keeps_even_nodes(seed in any::<u64>(), index in 0u64..1000, m in 1usize..3) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let w = sample_brownian(grid, m, seed, index).unwrap();
        let c = w.coarsened().unwrap();
        for k in 0..=32 {
            prop_assert_eq!(c.at(k), w.at(2 * k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn identical_starts_have_zero_distance(x in vector(5, 2.0), seed in any::<u64>()) {
        let model = GeneralModel::from_params(ModelParams::default()).unwrap();
        let mc = MonteCarlo::new(1.0 / 128.0, Solver::Cascade).unwrap();
        let est = mc.estimate_distance(&model, &x, &x, 0.9, 8, seed).unwrap();
        prop_assert_eq!(est.mean, 0.0);
        prop_assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn perturbed_coordinate_stays_in_envelope(eps in 1e-3f64..0.3, seed in any::<u64>(), index in 0u64..100) {
        let model = GeneralModel::from_params(ModelParams::default()).unwrap();
        let grid = TimeGrid::new(1.0, 1024).unwrap();
        let w = sample_brownian(grid, 1, seed, index).unwrap();
        let path = solve_cascade(model.base(), &w, &[0.0, 0.0, 0.0, eps, 0.0]).unwrap();
        let schedule = KappaSchedule::new(model.base().f(), 0.5, &grid).unwrap();
        let report = sandwich_check(&path, eps, 4, &schedule).unwrap();
        prop_assert!(report.passed, "{}", report.to_json());
    }

    #[test]
    fn general_solution_is_mapped_base_solution(
        shift in vector(6, 2.0), direction in vector(6, 2.0), y in vector(5, 1.0), seed in any::<u64>()
    ) {
        let Some(model) = general_model(6, shift, direction) else { return Ok(()) };
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let w = sample_brownian(grid, 1, seed, 0).unwrap();
        let mut y6 = y.clone();
        y6.push(0.3);
        let x0 = model.from_base(&y6);
        let x = solve_general_cascade(&model, &w, x0.as_slice()).unwrap();
        let base = solve_cascade(model.base(), &w, &[y[0], y[1], y[2], y[3], y[4]]).unwrap();
        for k in [0, 100, 256] {
            let back = model.to_base(x.state(k));
            for i in 0..5 {
                prop_assert!((back[i] - base.component(k, i)).abs() < 1e-8 * (1.0 + base.component(k, i).abs()));
            }
            prop_assert!((back[5] - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn lemma21_holds_off_grid(p in 1.0f64..6.0, kappa in 0.05f64..20.0, k in 1.0f64..10.0) {
        let prm = Lemma21Params::new(p, kappa, (-k).exp()).unwrap();
        let report = check_lemma21(&prm).unwrap();
        prop_assert!(report.passed, "{}", report.to_json());
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let model = GeneralModel::from_params(ModelParams::default()).unwrap();
    let mc = MonteCarlo::new(1.0 / 256.0, Solver::Cascade).unwrap();
    let eps = [0.3, 0.1, 0.03];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc.sweep_epsilon(&model, 0.9, &eps, 700, 99, 1.0).unwrap())
    };
    let (a, b, c) = (run(1), run(2), run(5));
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut ca = Vec::new();
    a.write_csv(&mut ca).unwrap();
    let mut cc = Vec::new();
    c.write_csv(&mut cc).unwrap();
    assert_eq!(ca, cc);
}

#[test]
fn sweep_matches_separate_estimates() {
    let model = GeneralModel::from_params(ModelParams::default()).unwrap();
    let mc = MonteCarlo::new(1.0 / 256.0, Solver::Cascade).unwrap();
    let sweep = mc.sweep_epsilon(&model, 0.9, &[0.2, 0.02], 200, 5, 1.0).unwrap();
    let single = mc
        .estimate_distance(&model, &[0.0; 5], &[0.0, 0.0, 0.0, 0.02, 0.0], 0.9, 200, 5)
        .unwrap();
    assert_eq!(sweep.estimates[1].mean, single.mean);
    assert_eq!(sweep.estimates[1].std_error, single.std_error);
}
