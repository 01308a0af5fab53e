use std::sync::Arc;

use cmcflow::ambient::AmbientMetric;
use cmcflow::surface::{
    area, enclosed_volume, geometry, make_sphere, sphere_of_volume, variation_check, RadialGraph, SphCoeffs,
    SphericalGrid, VARIATION_STEP,
};
use proptest::prelude::*;

type Modes = Vec<(usize, i32, f64)>;

fn band_limited(grid: &SphericalGrid, modes: &Modes) -> Vec<f64> {
    let mut c = SphCoeffs::zeros(grid.l_max());
    for &(l, m, a) in modes {
        c.set(l, m, c.get(l, m) + a);
    }
    grid.synthesize(&c)
}

fn modes(max_degree: usize, count: usize, amp: f64) -> impl Strategy<Value = Modes> {
    prop::collection::vec(
        (1..=max_degree).prop_flat_map(move |l| (Just(l), -(l as i32)..=(l as i32), -amp..amp)),
        1..=count,
    )
}

fn graph_from(grid: Arc<SphericalGrid>, metric: AmbientMetric, r0: f64, m: &Modes) -> RadialGraph {
    let shape = band_limited(&grid, m);
    let rho = shape.iter().map(|s| r0 * (1.0 + s)).collect();
    RadialGraph::new(grid, metric, rho).unwrap()
}

fn closed_form_kappa(mass: f64, r: f64) -> f64 {
    let phi = 1.0 + mass / (2.0 * r);
    phi.powi(-3) / r * (1.0 - mass / (2.0 * r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coordinate_spheres_are_umbilic_with_closed_form_curvature(
        l in 4usize..20,
        mass in 0.0f64..3.0,
        scale in 1.1f64..6.0,
    ) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let r0 = scale * metric.horizon_radius().max(0.5);
        let g = make_sphere(SphericalGrid::new(l).unwrap(), metric, r0).unwrap();
        let f = geometry(&g).unwrap();
        let kappa = closed_form_kappa(mass, r0);
        for n in f.nodes() {
            prop_assert!(n.ring_norm2.max(0.0).sqrt() <= 1e-9);
            for k in n.principal {
                prop_assert!((k - kappa).abs() <= 1e-9 * kappa.abs(), "{k} vs {kappa}");
            }
        }
    }

    #[test]
    fn traceless_identity_and_normal_invariants(m in modes(5, 4, 0.04), mass in 0.0f64..2.5) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let g = graph_from(SphericalGrid::new(12).unwrap(), metric.clone(), 3.0, &m);
        let f = geometry(&g).unwrap();
        for n in f.nodes() {
            let h = n.mean_curvature;
            let scale = n.a_norm2.max(1e-30);
            prop_assert!((n.ring_norm2 + h * h / 2.0 - n.a_norm2).abs() <= 1e-12 * scale.max(1.0));
            prop_assert!(n.ring_norm2 >= -1e-12);
            prop_assert!(n.chi > 0.0);
            let fr = metric.frame3(&n.point).unwrap();
            let nn = n.normal.dot(&(fr.g * n.normal));
            prop_assert!((nn - 1.0).abs() <= 1e-10);
            for t in &n.tangent {
                prop_assert!(n.normal.dot(&(fr.g * t)).abs() <= 1e-10 * t.norm());
            }
            prop_assert!((n.second_form[(0, 1)] - n.second_form[(1, 0)]).abs() <= 1e-12 * n.second_form.norm().max(1e-3));
        }
    }

    #[test]
    fn longitude_rotation_changes_no_scalar_summary(m in modes(6, 4, 0.05), shift in 1usize..20) {
        let metric = AmbientMetric::schwarzschild(2, 2.0).unwrap();
        let g = graph_from(SphericalGrid::new(16).unwrap(), metric, 3.0, &m);
        let r = g.rotate_columns(shift);
        let (fa, fb) = (geometry(&g).unwrap(), geometry(&r).unwrap());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        prop_assert!(close(area(&g).unwrap(), area(&r).unwrap()));
        prop_assert!(close(enclosed_volume(&g).unwrap(), enclosed_volume(&r).unwrap()));
        let max_h = |f: &cmcflow::surface::GeometryFields| f.mean_curvature().into_iter().fold(f64::MIN, f64::max);
        prop_assert!(close(max_h(&fa), max_h(&fb)));
        prop_assert!(close(fa.kappa_range().0, fb.kappa_range().0));
    }

    #[test]
    fn refining_the_grid_leaves_integrals_unchanged(m in modes(6, 4, 0.03), mass in 0.0f64..2.5) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let summary = |l: usize| {
            let g = graph_from(SphericalGrid::new(l).unwrap(), metric.clone(), 3.0, &m);
            let f = geometry(&g).unwrap();
            let total_h = f.integrate(&f.mean_curvature());
            (area(&g).unwrap(), enclosed_volume(&g).unwrap(), total_h)
        };
        let (a, b) = (summary(32), summary(48));
        prop_assert!((a.0 - b.0).abs() <= 1e-10 * a.0, "area {} {}", a.0, b.0);
        prop_assert!((a.1 - b.1).abs() <= 1e-10 * a.1, "volume {} {}", a.1, b.1);
        prop_assert!((a.2 - b.2).abs() <= 1e-10 * a.2.abs(), "total H {} {}", a.2, b.2);
    }

    #[test]
    fn first_variation_matches_difference_quotient(
        shape in modes(5, 3, 0.04),
        psi_modes in modes(6, 4, 1.0),
        mass in 0.0f64..2.5,
    ) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let grid = SphericalGrid::new(24).unwrap();
        let g = graph_from(grid.clone(), metric, 3.0, &shape);
        let psi = band_limited(&grid, &psi_modes);
        let (lhs, rhs) = variation_check(&g, &psi, VARIATION_STEP).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn volume_inverse_round_trips(mass in 0.0f64..3.0, scale in 1.05f64..5.0) {
        let metric = AmbientMetric::schwarzschild(2, mass).unwrap();
        let r0 = scale * metric.horizon_radius().max(0.5);
        let g = make_sphere(SphericalGrid::new(8).unwrap(), metric.clone(), r0).unwrap();
        let r = sphere_of_volume(&metric, enclosed_volume(&g).unwrap()).unwrap();
        prop_assert!((r - r0).abs() <= 1e-10 * r0);
    }
}

#[test]
fn zero_variation_field_gives_zero() {
    let metric = AmbientMetric::schwarzschild(2, 2.0).unwrap();
    let g = make_sphere(SphericalGrid::new(8).unwrap(), metric, 2.0).unwrap();
    let (lhs, rhs) = variation_check(&g, &vec![0.0; g.rho().len()], VARIATION_STEP).unwrap();
    assert_eq!((lhs, rhs), (0.0, 0.0));
}
