use cmcflow::ambient::AmbientMetric;
use cmcflow::diagnostics::{fit_exponential, fit_rate, record, RateField};
use cmcflow::flow::{run, speed_average, step, FlowConfig, FlowKind, FlowState, StepContext, TimeStep};
use cmcflow::stability::{assemble, compare_rates, spectrum, AssembleTolerances, Constraint, Variant};
use cmcflow::surface::{make_sphere, perturb, RadialGraph, SphericalGrid};
use proptest::prelude::*;

fn fixed(kind: FlowKind, dt: f64) -> FlowConfig {
    FlowConfig {
        kind,
        time_step: TimeStep::Fixed(dt),
        ..FlowConfig::default()
    }
}

fn schwarzschild_start(l: usize, eps: f64) -> RadialGraph {
    let metric = AmbientMetric::schwarzschild(2, 2.0).unwrap();
    let s = make_sphere(SphericalGrid::new(l).unwrap(), metric, 3.0).unwrap();
    perturb(&s, (2, 0), eps).unwrap()
}

#[test]
fn area_rate_matches_dissipation_integral() {
    let cfg = fixed(FlowKind::Volume, 0.005);
    let state = FlowState::new(schwarzschild_start(16, 0.05), &cfg).unwrap();
    let dissipation = |s: &FlowState| {
        let h = speed_average(&s.fields, FlowKind::Volume).unwrap();
        let f: Vec<f64> = s.fields.mean_curvature().iter().map(|x| (h - x).powi(2)).collect();
        s.fields.integrate(&f)
    };
    let next = step(&state, &cfg, 0.005, &StepContext { target_volume: None }).unwrap();
    let rate = (next.fields.area() - state.fields.area()) / 0.005;
    let expect = -0.5 * (dissipation(&state) + dissipation(&next));
    assert!((rate - expect).abs() <= 0.05 * expect.abs(), "{rate} vs {expect}");
}

#[test]
fn curvatures_stay_in_window_for_small_perturbations() {
    let g = schwarzschild_start(12, 0.01);
    let kappa = {
        let phi: f64 = 1.0 + 2.0 / 6.0;
        phi.powi(-3) / 3.0 * (1.0 - 2.0 / 6.0)
    };
    for kind in [FlowKind::Volume, FlowKind::Area] {
        let out = run(g.clone(), &fixed(kind, 0.1), |s| {
            let (lo, hi) = s.fields.kappa_range();
            assert!(lo >= 0.5 * kappa && hi <= 2.0 * kappa, "t={} [{lo}, {hi}]", s.t);
            Ok(())
        })
        .unwrap();
        assert!(out.termination.is_converged());
    }
}

#[test]
fn record_is_a_pure_function_of_state() {
    let cfg = fixed(FlowKind::Volume, 0.1);
    let state = FlowState::new(schwarzschild_start(12, 0.03), &cfg).unwrap();
    assert_eq!(record(&state).unwrap().csv_line(), record(&state).unwrap().csv_line());
}

#[test]
fn euclidean_decay_rate_matches_degree_two_block() {
    let metric = AmbientMetric::euclidean(2).unwrap();
    let grid = SphericalGrid::new(12).unwrap();
    let sphere = make_sphere(grid.clone(), metric, 1.0).unwrap();
    let start = perturb(&sphere, (2, 0), 1e-3).unwrap();
    let mut rows = Vec::new();
    let out = run(start, &fixed(FlowKind::Volume, 0.01), |s| {
        rows.push(record(s)?);
        Ok(())
    })
    .unwrap();
    assert!(out.termination.is_converged());
    let t_end = out.state.t;
    let fit = fit_rate(&rows, RateField::MaxDev, (0.5 * t_end, t_end)).unwrap();
    let op = assemble(&sphere, 6, Variant::Full, &AssembleTolerances::default()).unwrap();
    let rep = spectrum(&op, Constraint::Volume).unwrap();
    assert!((rep.largest_of_degree(2).unwrap() + 4.0).abs() < 1e-8);
    assert!((fit.lambda - 4.0).abs() < 0.05, "{}", fit.lambda);
    let restricted = spectrum(&op.restrict(|l, m| m == 0 && l % 2 == 0).unwrap(), Constraint::Volume).unwrap();
    assert!(compare_rates(&restricted, &fit).unwrap() < 0.0125);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_exact_on_noiseless_exponentials(lambda in 0.01f64..5.0, amp in 1e-6f64..1e3, t0 in 0.0f64..5.0) {
        let pts: Vec<(f64, f64)> = (0..60).map(|i| {
            let t = t0 + i as f64 * 0.05;
            (t, amp * (-lambda * t).exp())
        }).collect();
        let fit = fit_exponential(&pts, (t0, t0 + 3.0)).unwrap();
        prop_assert!((fit.lambda - lambda).abs() <= 1e-9 * lambda.max(1.0));
        prop_assert!((0.0..=1.0).contains(&fit.r2));
        prop_assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn late_window_recovers_slower_rate(slow in 0.1f64..1.0, gap in 2.0f64..6.0, mix in 0.1f64..10.0) {
        let fast = slow * gap + 1.0;
        let pts: Vec<(f64, f64)> = (0..=400).map(|i| {
            let t = i as f64 * 0.1;
            (t, (-slow * t).exp() + mix * (-fast * t).exp())
        }).collect();
        let t_start = 25.0 / (fast - slow);
        let fit = fit_exponential(&pts, (t_start, 40.0)).unwrap();
        prop_assert!((fit.lambda - slow).abs() <= 1e-6 * slow, "{} vs {slow}", fit.lambda);
    }

    #[test]
    fn fit_r2_in_unit_interval(noise in prop::collection::vec(-0.5f64..0.5, 30)) {
        let pts: Vec<(f64, f64)> = noise.iter().enumerate()
            .map(|(i, e)| (i as f64, (-(0.3 * i as f64) + e).exp()))
            .collect();
        let fit = fit_exponential(&pts, (0.0, 29.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&fit.r2));
    }

    #[test]
    fn euclidean_eigenvalues_match_closed_form(radius in 0.3f64..5.0) {
        let metric = AmbientMetric::euclidean(2).unwrap();
        let s = make_sphere(SphericalGrid::new(12).unwrap(), metric, radius).unwrap();
        let op = assemble(&s, 6, Variant::Full, &AssembleTolerances::default()).unwrap();
        prop_assert!(op.symmetry_defect() <= 1e-10);
        let rep = spectrum(&op, Constraint::None).unwrap();
        for l in 1..=6usize {
            let want = (2.0 - (l * (l + 1)) as f64) / (radius * radius);
            let got = rep.largest_of_degree(l).unwrap();
            prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "l={l}: {got} vs {want}");
        }
    }

    #[test]
    fn schwarzschild_operator_is_block_diagonal(mass in 0.1f64..3.0, scale in 1.3f64..4.0) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let r0 = scale * metric.horizon_radius();
        let s = make_sphere(SphericalGrid::new(12).unwrap(), metric, r0).unwrap();
        let op = assemble(&s, 5, Variant::Full, &AssembleTolerances::default()).unwrap();
        prop_assert!(op.cross_degree_defect() <= 1e-8);
        prop_assert!(op.symmetry_defect() <= 1e-10);
    }
}
