use super::*;
use crate::model::{
    ControlAffineDynamics, GrowthConstants, HamiltonianTerm, MatrixField, Orientation, QuadraticTerm, RunningCost,
    ScalarField, ScalarHTerm, StateFn, VectorField,
};
use crate::presets::{preset, PresetOptions};
use crate::riccati::{self, ScalarLQParams};

fn h_spec(h: f64, horizon: f64) -> ProblemSpec {
    ProblemSpec::new(
        1,
        vec![HamiltonianTerm::ScalarH(ScalarHTerm { h: StateFn::constant(h) })],
        StateFn::new(|x| x[0] * x[0]),
        Orientation::Initial,
        horizon,
        GrowthConstants::new(1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn step_bound_examples() {
    assert!((cfl_dt(&[0.1], 0.5, 0.0) - 0.01).abs() < 1e-15);
    assert!((cfl_dt(&[0.1], 0.0, 2.0) - 0.05).abs() < 1e-15);
    assert_eq!(cfl_dt(&[0.1, 0.2], 0.0, 0.0), f64::INFINITY);
    // two axes halve the step
    assert!((cfl_dt(&[0.1, 0.1], 0.0, 2.0) - 0.025).abs() < 1e-15);
}

#[test]
fn zero_hamiltonian_leaves_the_data_unchanged() {
    let spec = h_spec(0.0, 0.5);
    let grid = Grid::with_spacing(vec![-1.0], vec![1.0], 0.1).unwrap();
    let field = solve(&spec, &grid, &SchemeConfig::default()).unwrap();
    assert!(!field.blew_up());
    assert_eq!(field.final_layer(), field.layers[0].as_slice());
}

#[test]
fn update_is_monotone_under_the_step_bound() {
    let spec = h_spec(1.0, 0.25);
    let grid = Grid::with_spacing(vec![-3.0], vec![3.0], 0.05).unwrap();
    let base: Vec<f64> = grid.points().iter().map(|x| (2.0 * x[0]).sin() + 0.5 * x[0] * x[0]).collect();
    for dissipation in [Dissipation::Global, Dissipation::Local] {
        let scheme = SchemeConfig {
            dissipation,
            ..SchemeConfig::default()
        }
        .resolve(&spec, &grid)
        .unwrap();
        let (u, courant) = step(&base, 0.0, &spec, &grid, &scheme).unwrap();
        assert!(courant <= 1.0);
        for k in (3..grid.len() - 3).step_by(7) {
            let mut bumped = base.clone();
            bumped[k] += 1e-3;
            let (v, _) = step(&bumped, 0.0, &spec, &grid, &scheme).unwrap();
            for (j, (a, b)) in u.iter().zip(&v).enumerate() {
                if (2..grid.len() - 2).contains(&j) {
                    assert!(b >= &(a - 1e-15), "{dissipation:?}: node {j} decreased after bump at {k}");
                }
            }
        }
    }
}

#[test]
fn constant_h_matches_hopf_lax() {
    // w_t + |w_x|² = 0, w(x,0) = x² has w = x²/(1 + 4t)
    let spec = h_spec(1.0, 0.25);
    let grid = Grid::with_spacing(vec![-3.0], vec![3.0], 0.01).unwrap();
    let field = solve(&spec, &grid, &SchemeConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for x in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let v = field.sample(&DVector::from_element(1, x), 0.25).unwrap();
        worst = worst.max((v - x * x / 2.0).abs());
    }
    assert!(worst < 5e-3, "worst error {worst}");
}

#[test]
fn lq_preset_tracks_the_riccati_value() {
    let p = preset("lq", &PresetOptions::default()).unwrap();
    let grid = p.grid(None).unwrap();
    let field = solve(&p.spec, &grid, &p.scheme()).unwrap();
    assert!(!field.blew_up());
    assert!(field.stats.max_courant <= 1.0);
    let params = ScalarLQParams::new(2.0, 1.0).unwrap();
    let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
    for k in 0..=40 {
        let x = -2.0 + 0.1 * k as f64;
        let exact = riccati::lq_value(&params, x, 0.0).unwrap();
        let v = field.sample(&DVector::from_element(1, x), 0.0).unwrap();
        err = err.max((v - exact).abs());
        scale = scale.max(exact.abs());
    }
    assert!(err / scale < 2e-2, "relative error {}", err / scale);
}

#[test]
fn blowup_preset_stops_near_the_singular_time() {
    let p = preset("lq-blowup", &PresetOptions::default()).unwrap();
    let grid = p.grid(None).unwrap();
    let field = solve(&p.spec, &grid, &p.scheme()).unwrap();
    let tau = riccati::blowup_time(&ScalarLQParams::new(0.5, 2.0).unwrap()).unwrap();
    let b = field.blow_up.expect("blow-up detected");
    assert!(b.norm > 1e8 || !b.norm.is_finite());
    assert!(b.time < tau + 0.3 && b.time > tau - 0.3, "detected at {} vs {tau}", b.time);
    assert!(field.norm_history.iter().all(|n| n.is_finite() && *n <= 1e8));
}

#[test]
fn oversized_step_is_rejected() {
    let spec = h_spec(1.0, 0.25);
    let grid = Grid::with_spacing(vec![-3.0], vec![3.0], 0.05).unwrap();
    let bound = SchemeConfig::default().resolve(&spec, &grid).unwrap().bound;
    let config = SchemeConfig {
        dt: Some(2.0 * bound.dt_max),
        ..SchemeConfig::default()
    };
    assert!(matches!(solve(&spec, &grid, &config), Err(Error::Config(_))));
}

#[test]
fn cross_diffusion_is_rejected() {
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let dynamics = ControlAffineDynamics::new(
        2,
        2,
        2,
        VectorField::zeros(2),
        MatrixField::constant(nalgebra::DMatrix::identity(2, 2)),
        MatrixField::constant(sigma),
    );
    let spec = ProblemSpec::new(
        2,
        vec![HamiltonianTerm::InfQuadratic(QuadraticTerm {
            dynamics,
            cost: RunningCost::new(1.0, ScalarField::zero()).unwrap(),
        })],
        StateFn::constant(0.0),
        Orientation::Terminal,
        1.0,
        GrowthConstants::new(1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap();
    let grid = Grid::with_spacing(vec![-1.0, -1.0], vec![1.0, 1.0], 0.25).unwrap();
    assert!(matches!(solve(&spec, &grid, &SchemeConfig::default()), Err(Error::Validation(_))));
}

#[test]
fn recording_stride_keeps_the_endpoints() {
    let spec = h_spec(1.0, 0.25);
    let grid = Grid::with_spacing(vec![-3.0], vec![3.0], 0.05).unwrap();
    let config = SchemeConfig {
        record_every: 10,
        ..SchemeConfig::default()
    };
    let field = solve(&spec, &grid, &config).unwrap();
    assert_eq!(field.march_times[0], 0.0);
    assert_eq!(*field.march_times.last().unwrap(), 0.25);
    assert!(field.layers.len() < field.stats.steps);
}

#[test]
fn terminal_fields_sample_in_problem_time() {
    let p = preset("lq", &PresetOptions::default()).unwrap();
    let grid = p.grid(Some(0.1)).unwrap();
    let field = solve(&p.spec, &grid, &p.scheme()).unwrap();
    assert_eq!(field.times[0], 1.0);
    let x = DVector::from_element(1, 1.5);
    assert!((field.sample(&x, 1.0).unwrap() + 2.25).abs() < 1e-12);
    assert!(field.sample(&x, 1.5).is_err());
}
