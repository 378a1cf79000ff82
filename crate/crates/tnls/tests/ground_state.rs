mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use tnls::experiments::talenti_constant;
use tnls::grid::{h1_norm_sq, make_grid, radial_laplacian, rescale_phase, ComplexField, OuterBc};
use tnls::ground_state::{
    crit_integral, energy, eval_w, eval_w1, w1_exact, w_exact, GroundStateBundle, VariationalStatus,
};

use common::{reference_grid, rel};

#[test]
fn closed_form_anchor_values() {
    assert!((w_exact(3, 3f64.sqrt()) - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((w_exact(5, 15f64.sqrt()) - 2f64.powf(-1.5)).abs() < 1e-15);
    for dim in 3..=5 {
        assert!((w_exact(dim, 0.0) - 1.0).abs() < 1e-15);
        assert!((w1_exact(dim, 0.0) - (dim as f64 - 2.0) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn w_on_grid_is_positive_and_decreasing() {
    for dim in 3..=5 {
        let w = eval_w(&reference_grid(dim));
        assert!(w.values.iter().all(|&v| v > 0.0));
        assert!(w.values.windows(2).all(|p| p[1] < p[0]));
    }
}

#[test]
fn energy_identities_in_every_dimension() {
    for dim in 3..=5 {
        let gs = GroundStateBundle::new(&reference_grid(dim));
        let n = dim as f64;
        assert!(rel(gs.energy_w, gs.h1_w / n) < 1e-8, "N={dim}");
        assert!(rel(gs.crit_w, gs.h1_w) < 1e-8, "N={dim}");
        assert!(rel(energy(&gs.w_complex()), gs.h1_w / n) < 1e-8, "N={dim}");
    }
}

#[test]
fn sobolev_ratio_matches_talenti() {
    for dim in 3..=5 {
        let gs = GroundStateBundle::new(&reference_grid(dim));
        assert!(rel(gs.sobolev_cn, talenti_constant(dim)) < 1e-8, "N={dim}: {}", gs.sobolev_cn);
    }
    // C_3 = (3π)^{−1/2}·(Γ(3)/Γ(3/2))^{1/3}
    let c3 = (1.0 / (3.0 * PI)).sqrt() * (2.0 / (PI.sqrt() / 2.0)).powf(1.0 / 3.0);
    assert!(rel(talenti_constant(3), c3) < 1e-15);
}

#[test]
fn w1_solves_the_linearized_equation() {
    let g = reference_grid(3);
    let w = eval_w(&g);
    let w1 = eval_w1(&g).to_complex();
    let lap = radial_laplacian(&w1, OuterBc::GroundStateRobin);
    let err = g
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < 0.9 * g.r_max)
        .map(|(i, _)| (lap.values[i].re + 5.0 * w.values[i].powi(4) * w1.values[i].re).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn w1_is_the_scaling_generator() {
    let g = make_grid(3, 100.0, 8000, 3.0).unwrap();
    let w = eval_w(&g).to_complex();
    let h = 1e-4;
    let up = rescale_phase(&w, 0.0, 1.0 + h).unwrap();
    let down = rescale_phase(&w, 0.0, 1.0 - h).unwrap();
    let w1 = eval_w1(&g);
    let err = (0..g.m)
        .filter(|&i| g.nodes[i] < 50.0)
        .map(|i| (-(up.values[i].re - down.values[i].re) / (2.0 * h) - w1.values[i]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn energy_of_zero() {
    let g = reference_grid(4);
    assert_eq!(energy(&ComplexField::zeros(&g)), 0.0);
}

#[test]
fn dee_values() {
    let gs = GroundStateBundle::new(&reference_grid(3));
    let w = gs.w_complex();
    assert_eq!(gs.dee(&w), (0.0, 0.0));
    let (s, m) = gs.dee(&w.scale_re(0.9));
    assert!(rel(s, -0.19 * gs.h1_w) < 1e-10);
    assert!(rel(m, 0.19 * gs.h1_w) < 1e-10);
}

#[test]
fn variational_equality_case() {
    let gs = GroundStateBundle::new(&reference_grid(3));
    let rep = gs.variational_check(&gs.w_complex());
    assert_eq!(rep.status, VariationalStatus::Subcritical);
    assert!(rep.holds);
    assert!((rep.h1_ratio - 1.0).abs() < 1e-12);
    assert!((rep.energy_ratio - 1.0).abs() < 1e-8);
    assert!((rep.sobolev_ratio - 1.0).abs() < 1e-8);
}

#[test]
fn variational_gap_of_half_w() {
    let gap = |m: usize| {
        let gs = GroundStateBundle::new(&make_grid(3, 100.0, m, 3.0).unwrap());
        let rep = gs.variational_check(&gs.w_complex().scale_re(0.5));
        assert!(rep.holds && rep.sobolev_holds);
        rep.energy_ratio - rep.h1_ratio
    };
    let (a, b) = (gap(4000), gap(8000));
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    // E(cW)/E(W) = (N/2)c² − (N−2)/2·c^{2*}; at N=3, c=½: 3/8 − 1/128
    assert!((a - (0.375 - 1.0 / 128.0 - 0.25)).abs() < 1e-6, "{a}");
}

#[test]
fn variational_bump_below_w() {
    let g = reference_grid(3);
    let gs = GroundStateBundle::new(&g);
    let bump = ComplexField::from_fn(&g, |r| {
        Complex64::new(if r < 4.0 { (-1.0 / (1.0 - r * r / 16.0)).exp() } else { 0.0 }, 0.0)
    });
    let c = 0.5 * (gs.h1_w / h1_norm_sq(&bump)).sqrt();
    let f = bump.scale_re(c);
    assert!(rel(h1_norm_sq(&f), 0.25 * gs.h1_w) < 1e-12);
    let rep = gs.variational_check(&f);
    assert_eq!(rep.status, VariationalStatus::Subcritical);
    assert!(rep.holds && rep.sobolev_holds);
    assert!(rep.energy_ratio > rep.h1_ratio);
    assert!(crit_integral(&f) < gs.crit_w);
}

#[test]
fn variational_rejects_supercritical_input() {
    let gs = GroundStateBundle::new(&reference_grid(3));
    let rep = gs.variational_check(&gs.w_complex().scale_re(1.1));
    assert_eq!(rep.status, VariationalStatus::NotSubcritical);
    assert!(!rep.holds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_and_gradient_are_symmetry_invariant(theta in -PI..PI, mu in 0.5f64..2.0) {
        let gs = GroundStateBundle::new(&reference_grid(3));
        let v = rescale_phase(&gs.w_complex(), theta, mu).unwrap();
        prop_assert!(rel(energy(&v), gs.energy_w) < 1e-4);
        prop_assert!(gs.dee(&v).1 < 1e-4 * gs.h1_w);
    }
}
