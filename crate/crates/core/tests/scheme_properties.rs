use hjblab_core::barriers::quadratic_barrier_constants;
use hjblab_core::mc::{estimate_cost, McConfig, PolicySpec};
use hjblab_core::model::StateFn;
use hjblab_core::presets::{preset, PresetOptions};
use hjblab_core::solver::{solve, solve_resolved, step, update_point, boundary_ghosts, Dissipation, SchemeConfig};
use hjblab_core::verification::compare_fields;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raising one stencil value never lowers an update when `dt` sits exactly
/// on the stability bound.
#[test]
fn updates_are_monotone_at_the_step_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["sign-h", "lq", "finance", "sigma-form", "risk-sensitive"] {
        let p = preset(name, &PresetOptions::default()).unwrap();
        let grid = p.grid(None).unwrap();
        let probe = SchemeConfig { cfl_safety: 1.0, ..p.scheme() }.resolve(&p.spec, &grid).unwrap();
        for dissipation in [Dissipation::Global, Dissipation::Local] {
            let scheme = SchemeConfig {
                dt: Some(probe.bound.dt_max),
                dissipation,
                ..p.scheme()
            }
            .resolve(&p.spec, &grid)
            .unwrap();
            let layer: Vec<f64> = grid.points().iter().map(|x| p.spec.data.eval(x)).collect();
            for _ in 0..20 {
                let index = rng.random_range(0..grid.len());
                let idx = grid.multi_index(index);
                let axis = rng.random_range(0..grid.dim());
                let dir: isize = if rng.random_bool(0.5) { 1 } else { -1 };
                let mut nb = idx;
                let shifted = idx[axis] as isize + dir;
                if shifted < 0 || shifted >= grid.n[axis] as isize {
                    continue;
                }
                nb[axis] = shifted as usize;
                let neighbour = grid.flat_index(nb);
                let time = p.spec.model_time(0.0);
                let ext = boundary_ghosts(&layer, &grid).unwrap();
                let (base, courant) = update_point(&ext, &grid, index, &p.spec, time, &scheme).unwrap();
                if courant > 1.0 {
                    continue;
                }
                let mut bumped = layer.clone();
                bumped[neighbour] += 1e-4;
                let ext = boundary_ghosts(&bumped, &grid).unwrap();
                let (raised, _) = update_point(&ext, &grid, index, &p.spec, time, &scheme).unwrap();
                assert!(raised >= base - 1e-12, "{name} {dissipation:?}: {raised} < {base}");
            }
        }
    }
}

#[test]
fn lq_solution_stays_between_the_quadratic_barriers() {
    let p = preset("lq", &PresetOptions::default()).unwrap();
    let grid = p.grid(None).unwrap();
    let (sub, sup) = quadratic_barrier_constants(&p.spec.constants);
    // the barrier window is short, so march with a fine step to record layers inside it
    let scheme = SchemeConfig {
        dt: Some(sup.tau / 20.0),
        ..p.scheme()
    };
    let field = solve(&p.spec, &grid, &scheme).unwrap();
    let points = grid.points();
    for (k, layer) in field.layers.iter().enumerate() {
        let s = field.march_times[k];
        if s > sup.tau {
            break;
        }
        for (x, w) in points.iter().zip(layer) {
            assert!(sub.eval(x, s) <= *w && *w <= sup.eval(x, s), "x = {}, s = {s}", x[0]);
        }
    }
}

#[test]
fn doubling_the_mc_step_doubles_the_deterministic_error() {
    let p = preset("lq", &PresetOptions::default()).unwrap();
    let sde = p.sde.unwrap();
    let policy = PolicySpec::constant_gain(DMatrix::from_element(1, 1, -0.5));
    let x0 = DVector::from_element(1, 1.0);
    let cost = |dt: f64| {
        estimate_cost(&sde, &policy, &x0, 0.0, &McConfig { n_paths: 1, dt, seed: 0, truncation: None })
            .unwrap()
            .mean
    };
    // closed-form cost of α = −x/2: x_T = e^{-T/2}, ∫ρ(α² + x²) = ρ·(5/4)(1 − e^{−T})
    let exact = 2.0 * 1.25 * (1.0 - (-1.0f64).exp()) - (-1.0f64).exp();
    let e1 = (cost(1e-2) - exact).abs();
    let e2 = (cost(5e-3) - exact).abs();
    let ratio = e1 / e2;
    assert!((ratio - 2.0).abs() < 0.1, "errors {e1} {e2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Ordered data produce ordered fields; the scheme is exactly monotone, so
    /// only rounding separates the layers.
    #[test]
    fn ordered_data_give_ordered_fields(a in 0.0f64..0.2, k in 0.5f64..1.0, phase in 0.0f64..6.28, gap in 0.0f64..0.3, name in prop::sample::select(vec!["lq", "sign-h", "const-h"])) {
        let p = preset(name, &PresetOptions::default()).unwrap();
        let grid = p.grid(Some(0.05)).unwrap();
        let scheme = p.scheme().resolve(&p.spec, &grid).unwrap();
        let base = p.spec.data.clone();
        let lower = StateFn::new(move |x| base.eval(x) + a * (k * x[0] + phase).sin());
        let below = lower.clone();
        let upper = StateFn::new(move |x| below.eval(x) + gap * (-(x[0] * x[0])).exp());
        let u = solve_resolved(&p.spec.with_data(lower), &grid, &scheme).unwrap();
        let v = solve_resolved(&p.spec.with_data(upper), &grid, &scheme).unwrap();
        let report = compare_fields(&u, &v, 1e-12).unwrap();
        prop_assert!(report.passed, "{:?}", report);
    }

    /// The operators do not see the value itself, so shifting the data shifts the field.
    #[test]
    fn constant_shift_commutes_with_marching(c in -5.0f64..5.0, name in prop::sample::select(vec!["lq", "finance", "sign-h"])) {
        let p = preset(name, &PresetOptions::default()).unwrap();
        let grid = p.grid(Some(0.1)).unwrap();
        let scheme = p.scheme().resolve(&p.spec, &grid).unwrap();
        let base = p.spec.data.clone();
        let shifted = StateFn::new(move |x| base.eval(x) + c);
        let u = solve_resolved(&p.spec, &grid, &scheme).unwrap();
        let v = solve_resolved(&p.spec.with_data(shifted), &grid, &scheme).unwrap();
        for (a, b) in u.final_layer().iter().zip(v.final_layer()) {
            prop_assert!((b - a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn steps_are_deterministic(seed in 0u64..1000) {
        let p = preset("sigma-form", &PresetOptions::default()).unwrap();
        let grid = p.grid(Some(0.25)).unwrap();
        let scheme = p.scheme().resolve(&p.spec, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = step(&layer, 0.0, &p.spec, &grid, &scheme).unwrap();
        let b = step(&layer, 0.0, &p.spec, &grid, &scheme).unwrap();
        prop_assert_eq!(a.0, b.0);
    }
}
