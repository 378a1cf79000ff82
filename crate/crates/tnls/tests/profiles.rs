mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use tnls::grid::{h1_norm_sq, ComplexField};
use tnls::ground_state::w_exact;
use tnls::profiles::{
    assemble_wka, build_profiles, build_profiles_with, eval_residual, extract_next_source,
    h1_excess_leading_coefficient, j_function, nonlinear_r, residual_rate, SourceRoute,
};
use tnls::Error;

use common::{loglog_slope, spectral3};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn rel_max(a: &ComplexField, b: &ComplexField) -> f64 {
    a.max_abs_diff(b) / b.max_abs()
}

#[test]
fn r_of_zero_is_zero() {
    let s = spectral3();
    assert_eq!(nonlinear_r(&ComplexField::zeros(&s.grid)).max_abs(), 0.0);
}

#[test]
fn r_is_quadratic_at_the_origin() {
    let s = spectral3();
    let g = ComplexField::from_fn(&s.grid, |r| Complex64::new(1.0, -0.5) * (-r * r / 3.0).exp());
    // L^{2N/(N+2)} norm
    let q = 6.0 / 5.0;
    let norm = |f: &ComplexField| {
        let v: Vec<f64> = f.values.iter().map(|z| z.norm().powf(q)).collect();
        s.grid.integrate(&v).powf(1.0 / q)
    };
    let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let n: Vec<f64> = eps.iter().map(|&e| norm(&nonlinear_r(&g.scale_re(e)))).collect();
    let p = loglog_slope(&eps, &n);
    assert!(p >= 1.9, "{p}");
}

#[test]
fn extraction_matches_the_exact_quadratic_term() {
    // for p_c = 5, (1+z)³(1+z̄)² has quadratic part 3z² + 6zz̄ + z̄², so
    // Ψ₁ = −iW³(3Φ₁² + 6|Φ₁|² + Φ̄₁²)
    let s = spectral3();
    let ps = build_profiles(-1.0, 1, &s.op, &s.pair).unwrap();
    let exact = ComplexField::from_fn(&s.grid, |_| Complex64::new(0.0, 0.0));
    let values: Vec<Complex64> = s
        .grid
        .nodes
        .iter()
        .zip(&ps.phis[0].values)
        .map(|(&r, &f)| -I * w_exact(3, r).powi(3) * (3.0 * f * f + 6.0 * f.norm_sqr() + f.conj() * f.conj()))
        .collect();
    let exact = ComplexField { values, ..exact };
    let ex = extract_next_source(&ps, 16).unwrap();
    assert!(rel_max(&ex.psi, &exact) < 1e-6, "{}", rel_max(&ex.psi, &exact));
    let series = build_profiles(-1.0, 2, &s.op, &s.pair).unwrap();
    assert!(rel_max(&series.psis[0], &exact) < 1e-10);
}

#[test]
fn extraction_is_converged_in_the_sample_count() {
    let s = spectral3();
    for k in 1..=2 {
        let ps = build_profiles(1.0, k, &s.op, &s.pair).unwrap();
        let a = extract_next_source(&ps, 16).unwrap().psi;
        let b = extract_next_source(&ps, 32).unwrap().psi;
        assert!(rel_max(&a, &b) < 1e-8, "k={k}: {}", rel_max(&a, &b));
    }
}

#[test]
fn zero_family() {
    let s = spectral3();
    let ps = build_profiles(0.0, 3, &s.op, &s.pair).unwrap();
    assert!(ps.phis.iter().all(|p| p.max_abs() == 0.0));
    assert_eq!(extract_next_source(&ps, 16).unwrap().psi.max_abs(), 0.0);
    assert_eq!(eval_residual(&ps, &s.op, 0.0).unwrap().max_abs(), 0.0);
}

#[test]
fn first_profile_is_the_eigenfunction() {
    let s = spectral3();
    let ps = build_profiles(1.7, 1, &s.op, &s.pair).unwrap();
    assert_eq!(ps.phis.len(), 1);
    assert_eq!(ps.phis[0].values, s.pair.yplus.scale_re(1.7).values);

    let t = 2.0;
    let sv = (-ps.e0 * t).exp();
    let u = assemble_wka(&ps, t);
    for (i, z) in u.values.iter().enumerate() {
        let expect = ps.phis[0].values[i] * sv + ps.w()[i];
        assert_eq!(*z, expect);
    }
    assert!(build_profiles(1.0, 0, &s.op, &s.pair).is_err());
}

#[test]
fn profiles_scale_with_the_parameter() {
    let s = spectral3();
    let a = build_profiles(0.8, 2, &s.op, &s.pair).unwrap();
    let b = build_profiles(1.6, 2, &s.op, &s.pair).unwrap();
    assert_eq!(b.phis[0].values, a.phis[0].scale_re(2.0).values);
    assert!(rel_max(&b.phis[1], &a.phis[1].scale_re(4.0)) < 1e-8);
}

#[test]
fn late_times_reproduce_w() {
    let s = spectral3();
    let ps = build_profiles(-1.0, 3, &s.op, &s.pair).unwrap();
    let u = assemble_wka(&ps, 50.0 / ps.e0);
    let d = u.sub(&s.gs.w_complex());
    assert!(h1_norm_sq(&d).sqrt() < 1e-15 * s.gs.h1_w.sqrt());
}

#[test]
fn residual_decays_at_the_expected_rate() {
    let s = spectral3();
    for a in [-1.0, 1.0] {
        for k in 1..=3 {
            let ps = build_profiles(a, k, &s.op, &s.pair).unwrap();
            let rr = residual_rate(&ps, &s.op, 5.0, 40).unwrap();
            assert!((rr.rate / rr.expected - 1.0).abs() < 0.1, "a={a} k={k}: {} vs {}", rr.rate, rr.expected);
            assert!(rr.r2 > 0.99);
        }
    }
}

#[test]
fn residual_refuses_large_amplitude() {
    let s = spectral3();
    let ps = build_profiles(-1.0, 2, &s.op, &s.pair).unwrap();
    assert!(matches!(eval_residual(&ps, &s.op, -10.0), Err(Error::AmplitudeTooLarge(_))));
}

#[test]
fn gradient_excess_leading_coefficient() {
    let s = spectral3();
    let y1 = ComplexField::from_parts(&s.grid, &s.pair.y1(), &vec![0.0; s.grid.m]);
    let wy1 = s.grid.h1_inner_raw(&s.gs.w_complex().values, &y1.values);
    for a in [-1.0, 1.0] {
        let ps = build_profiles(a, 3, &s.op, &s.pair).unwrap();
        let c = h1_excess_leading_coefficient(&ps, s.gs.h1_w);
        assert!((c / (2.0 * a * wy1) - 1.0).abs() < 0.01, "a={a}: {c} vs {}", 2.0 * a * wy1);
        assert_eq!(c.signum(), a);
    }
}

#[test]
fn sampled_and_series_routes_agree() {
    let s = spectral3();
    let a = build_profiles_with(-1.0, 3, &s.op, &s.pair, SourceRoute::Series).unwrap();
    let b = build_profiles_with(-1.0, 3, &s.op, &s.pair, SourceRoute::Sampled).unwrap();
    for j in 1..3 {
        assert!(rel_max(&b.phis[j], &a.phis[j]) < 1e-6, "Φ_{}: {}", j + 1, rel_max(&b.phis[j], &a.phis[j]));
    }
}

#[test]
fn truncation_keeps_the_lower_profiles() {
    let s = spectral3();
    let ps = build_profiles(1.0, 3, &s.op, &s.pair).unwrap();
    let t = ps.truncated(2).unwrap();
    assert_eq!((t.k, t.phis.len(), t.psis.len()), (2, 2, 1));
    assert_eq!(t.phis[1].values, ps.phis[1].values);
    assert!(ps.truncated(0).is_err() && ps.truncated(4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn r_agrees_with_j(amp in 0.0f64..0.5, phase in -3.14f64..3.14, width in 0.5f64..5.0) {
        let s = spectral3();
        let v = ComplexField::from_fn(&s.grid, |r| {
            Complex64::from_polar(amp * w_exact(3, r) * (-(r / width).powi(2)).exp(), phase * (1.0 + r).ln())
        });
        let rv = nonlinear_r(&v);
        for (i, &r) in s.grid.nodes.iter().enumerate().step_by(7) {
            let w = w_exact(3, r);
            let j = w.powi(5) * j_function(v.values[i] / w, 5.0);
            prop_assert!((rv.values[i] - j).norm() < 1e-10, "r={r}");
        }
    }
}
