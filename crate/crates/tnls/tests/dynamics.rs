mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use tnls::dynamics::{
    conjugate, evolve, evolve_fixed, free_gaussian, is_dispersing, scatter_proxy, step, Endpoint, EvolutionConfig,
    Sponge,
};
use tnls::grid::{h1_norm_sq, make_grid, ComplexField, OuterBc};
use tnls::ground_state::{eval_w, GroundStateBundle};

use common::{reference_grid, spectral3};

fn h1_dist(a: &ComplexField, b: &ComplexField) -> f64 {
    h1_norm_sq(&a.sub(b)).sqrt()
}

fn cfg(dt: f64, t_end: f64) -> EvolutionConfig {
    EvolutionConfig { dt, t_end, ..Default::default() }
}

/// A non-stationary datum with genuinely nonlinear dynamics.
fn bumped_w(grid: &std::sync::Arc<tnls::grid::RadialGrid>) -> ComplexField {
    let w = eval_w(grid).to_complex();
    let p = ComplexField::from_fn(grid, |r| Complex64::new(0.15, 0.1) * (-r * r / 2.0).exp());
    w.scale_re(0.8).add(&p)
}

#[test]
fn w_is_stationary() {
    let g = reference_grid(3);
    let w = eval_w(&g).to_complex();
    let nw = h1_norm_sq(&w).sqrt();
    let u = evolve_fixed(&w, 1e-3, 100, &cfg(1e-3, 0.1)).unwrap();
    assert!(h1_dist(&u, &w) / nw < 1e-4, "{}", h1_dist(&u, &w) / nw);
    let one = step(&w, 1e-3, &cfg(1e-3, 1e-3)).unwrap();
    assert!(h1_dist(&one, &w) / nw < 1e-6);
    assert!(step(&w, 0.0, &cfg(1e-3, 1e-3)).is_err());
}

#[test]
fn phase_rotated_w_is_stationary() {
    let g = reference_grid(3);
    let w = eval_w(&g).to_complex().scale(Complex64::from_polar(1.0, 0.7));
    let u = evolve_fixed(&w, 1e-3, 100, &cfg(1e-3, 0.1)).unwrap();
    assert!(h1_dist(&u, &w) / h1_norm_sq(&w).sqrt() < 1e-4);
}

#[test]
fn free_flow_matches_the_closed_form() {
    for dim in [3, 5] {
        let g = make_grid(dim, 60.0, 3000, 2.0).unwrap();
        let u0 = ComplexField::from_fn(&g, |r| free_gaussian(dim, 1.0, 0.0, r));
        let c = EvolutionConfig { nonlinear: false, observer_stride: 100, keep_fields: true, bc: OuterBc::Dirichlet, ..cfg(1e-3, 1.0) };
        let rec = evolve(&u0, &c).unwrap();
        assert_eq!(rec.endpoint, Endpoint::Completed);
        assert!(rec.fields.len() >= 10);
        for (t, u) in &rec.fields {
            let err = g
                .nodes
                .iter()
                .zip(&u.values)
                .map(|(&r, z)| (z - free_gaussian(dim, 1.0, *t, r)).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "N={dim} t={t}: {err}");
        }
    }
}

#[test]
fn subcritical_data_stays_below_w() {
    let s = spectral3();
    let u0 = s.gs.w_complex().scale_re(0.9);
    let c = EvolutionConfig { observer_stride: 100, ..cfg(2e-3, 20.0 / s.pair.e0) };
    let rec = evolve(&u0, &c).unwrap();
    assert_eq!(rec.endpoint, Endpoint::Completed);
    assert!(rec.sup_h1() < s.gs.h1_w);
    assert!(rec.relative_energy_drift() < 1e-6, "{}", rec.relative_energy_drift());
    assert!(!rec.dee_sign_flips(1e-4 * s.gs.h1_w));
}

#[test]
fn supercritical_data_blows_up_in_dimension_five() {
    let g = reference_grid(5);
    let u0 = eval_w(&g).to_complex().scale_re(1.1);
    let rec = evolve(&u0, &EvolutionConfig { observer_stride: 100, ..cfg(2e-3, 20.0) }).unwrap();
    match rec.endpoint {
        Endpoint::Blowup { t_star } => assert!(t_star > 0.0 && t_star < 20.0, "{t_star}"),
        other => panic!("expected blow-up, got {other:?}"),
    }
    assert!(rec.samples.iter().all(|s| s.dee_signed > 0.0));
}

#[test]
fn w_completes_with_small_dee() {
    let g = reference_grid(3);
    let gs = GroundStateBundle::new(&g);
    let rec = evolve(&gs.w_complex(), &cfg(2e-3, 2.0)).unwrap();
    assert_eq!(rec.endpoint, Endpoint::Completed);
    assert!(rec.samples.iter().all(|s| s.dee_signed.abs() < 1e-3 * gs.h1_w));
    assert!((rec.samples[0].potential_ratio - 1.0).abs() < 1e-8);
    assert!((scatter_proxy(&rec) - 1.0).abs() < 1e-4, "{}", scatter_proxy(&rec));
    let t = rec.times();
    assert!(t.windows(2).all(|p| p[1] > p[0]));
}

#[test]
fn scatter_proxy_of_small_and_zero_data() {
    let g = reference_grid(3);
    let small = eval_w(&g).to_complex().scale_re(0.05);
    let rec = evolve(&small, &cfg(2e-3, 2.0)).unwrap();
    assert!(scatter_proxy(&rec) < 0.1);
    assert!(is_dispersing(&rec, 0.1));
    let zero = evolve(&ComplexField::zeros(&g), &cfg(2e-3, 0.2)).unwrap();
    assert_eq!(scatter_proxy(&zero), 0.0);
}

#[test]
fn second_order_in_time() {
    let g = make_grid(3, 60.0, 2000, 3.0).unwrap();
    let u0 = bumped_w(&g);
    let c = cfg(1e-2, 0.4);
    let run = |dt: f64| evolve_fixed(&u0, dt, (0.4 / dt).round() as usize, &c).unwrap();
    let reference = run(0.4 / 320.0);
    let errs: Vec<f64> = [20.0, 40.0, 80.0].iter().map(|n| h1_dist(&run(0.4 / n), &reference)).collect();
    let f1 = errs[0] / errs[1];
    let f2 = errs[1] / errs[2];
    assert!(f1 >= 3.5 && f2 >= 3.5, "factors {f1} {f2}, errors {errs:?}");
}

#[test]
fn time_reversal_round_trip() {
    let g = make_grid(3, 60.0, 2000, 3.0).unwrap();
    let u0 = bumped_w(&g);
    let c = cfg(1e-3, 0.5);
    let fwd = evolve_fixed(&u0, 1e-3, 500, &c).unwrap();
    let back = conjugate(&evolve_fixed(&conjugate(&fwd), 1e-3, 500, &c).unwrap());
    let err = h1_dist(&back, &u0) / h1_norm_sq(&u0).sqrt();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn energy_and_mass_are_conserved_without_a_sponge() {
    let g = make_grid(3, 60.0, 2000, 3.0).unwrap();
    let rec = evolve(&bumped_w(&g), &cfg(2e-3, 2.0)).unwrap();
    assert_eq!(rec.endpoint, Endpoint::Completed);
    assert!(rec.relative_energy_drift() < 1e-6, "{}", rec.relative_energy_drift());
    assert!(rec.max_relative_mass_defect() < 1e-8, "{}", rec.max_relative_mass_defect());
}

#[test]
fn sponge_absorbs_outgoing_mass_and_stops_on_dispersal() {
    let g = make_grid(3, 60.0, 2000, 3.0).unwrap();
    let u0 = ComplexField::from_fn(&g, |r| Complex64::new(0.3 * (-r * r / 2.0).exp(), 0.0));
    let c = EvolutionConfig {
        sponge: Some(Sponge::outer_fifth(&g, 1.0)),
        scatter_stop: Some(1e-3),
        observer_stride: 50,
        ..cfg(1e-2, 200.0)
    };
    let rec = evolve(&u0, &c).unwrap();
    assert!(matches!(rec.endpoint, Endpoint::ScatterProxy { .. }), "{:?}", rec.endpoint);
    let last = rec.samples.last().unwrap();
    assert!(last.absorbed > 0.0);
    // mass balance: what left the grid was absorbed
    assert!(rec.max_relative_mass_defect() < 1e-6, "{}", rec.max_relative_mass_defect());
}

#[test]
fn invalid_configs_are_rejected() {
    let g = reference_grid(3);
    let w = eval_w(&g).to_complex();
    for c in [
        cfg(0.0, 1.0),
        EvolutionConfig { blowup_factor: 1.0, ..cfg(1e-3, 1.0) },
        EvolutionConfig { observer_stride: 0, ..cfg(1e-3, 1.0) },
        EvolutionConfig { dt_min: Some(1.0), ..cfg(1e-3, 1.0) },
    ] {
        assert!(evolve(&w, &c).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn flow_commutes_with_phase_rotation(theta in -3.14f64..3.14) {
        let g = make_grid(3, 40.0, 800, 3.0).unwrap();
        let u0 = bumped_w(&g);
        let c = cfg(5e-3, 0.1);
        let rot = Complex64::from_polar(1.0, theta);
        let a = evolve_fixed(&u0.scale(rot), 5e-3, 20, &c).unwrap();
        let b = evolve_fixed(&u0, 5e-3, 20, &c).unwrap().scale(rot);
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }
}
