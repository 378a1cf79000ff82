mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnls::grid::{h1_norm_sq, make_grid, ComplexField, OuterBc};
use tnls::ground_state::{energy, GroundStateBundle};
use tnls::linearized::{
    coercivity_probe, dense_p_min_eigenvalue, eigenpair, q_values, random_smooth_field, resolvent_solve,
    GperpProjector, LinearizedOperator,
};
use tnls::Error;

use common::{loglog_slope, reference_grid, rel, spectral, spectral3};

fn bump(grid: &std::sync::Arc<tnls::grid::RadialGrid>) -> ComplexField {
    ComplexField::from_fn(grid, |r| Complex64::new((-r * r / 2.0).exp(), 0.5 * r * r * (-r * r / 3.0).exp()))
}

#[test]
fn both_operators_are_symmetric_in_the_volume_pairing() {
    let s = spectral3();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_smooth_field(&s.grid, &mut rng).re();
    let y = random_smooth_field(&s.grid, &mut rng).re();
    let vol = s.grid.volumes();
    let pair = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(vol).map(|((p, q), m)| p * q * m).sum::<f64>();
    for (name, ax, ay) in [
        ("minus", s.op.a_minus(&x), s.op.a_minus(&y)),
        ("plus", s.op.a_plus(&x), s.op.a_plus(&y)),
    ] {
        let (l, r) = (pair(&ax, &y), pair(&x, &ay));
        assert!((l - r).abs() <= 1e-8 * l.abs().max(r.abs()), "{name}: {l} vs {r}");
    }
}

#[test]
fn kernel_of_l() {
    for dim in 3..=5 {
        let s = spectral(dim);
        let nw = s.gs.h1_w.sqrt();
        for (name, f) in [("iW", s.gs.iw()), ("W1", s.gs.w1_complex())] {
            let lf = s.op.apply_l(&f).unwrap();
            assert!(h1_norm_sq(&lf).sqrt() < 1e-3 * nw, "N={dim} {name}: {}", h1_norm_sq(&lf).sqrt());
        }
    }
}

#[test]
fn q_values_of_the_kernel_and_of_w() {
    for dim in 3..=5 {
        let grid = reference_grid(dim);
        let gs = GroundStateBundle::new(&grid);
        let op = LinearizedOperator::new(&grid, OuterBc::GroundStateRobin);
        let (qw, qiw, qw1) = q_values(&op, &gs);
        assert!((qw + 2.0 / (dim as f64 - 2.0)).abs() < 1e-6, "N={dim}: {qw}");
        assert!(qiw.abs() < 1e-6 && qw1.abs() < 1e-6, "N={dim}: {qiw} {qw1}");
    }
}

#[test]
fn quadratic_form_is_the_second_variation_of_energy() {
    let s = spectral3();
    let w = s.gs.w_complex();
    let g = bump(&s.grid);
    // the discrete first variation of E at W is tiny but not zero; remove it
    let grid = &s.grid;
    let lin_pot: Vec<f64> = w.values.iter().zip(&g.values).map(|(a, b)| a.re.powi(5) * b.re).collect();
    let first = grid.h1_inner_raw(&w.values, &g.values) - grid.integrate_with_tail(&lin_pot);
    let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let rem: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let ge = g.scale_re(e);
            (energy(&w.add(&ge)) - s.gs.energy_w - e * first - s.op.quadratic_q(&ge).unwrap()).abs()
        })
        .collect();
    let p = loglog_slope(&eps, &rem);
    assert!(p >= 2.9, "fitted exponent {p}, remainders {rem:?}");
}

#[test]
fn apply_l_is_real_linear() {
    let s = spectral3();
    // no subnormal samples, so powers of two commute with rounding and equality is exact
    let f = ComplexField::from_fn(&s.grid, |r| Complex64::new(1.0 / (1.0 + r * r).powi(2), r / (1.0 + r * r).powi(2)));
    for c in [-2.0, 0.5, 4.0] {
        let a = s.op.apply_l(&f.scale_re(c)).unwrap();
        let b = s.op.apply_l(&f).unwrap().scale_re(c);
        assert_eq!(a.values, b.values);
    }
    let other = bump(&make_grid(3, 100.0, 3000, 3.0).unwrap());
    assert_eq!(s.op.apply_l(&other).unwrap_err(), Error::GridMismatch);
}

#[test]
fn eigenpair_at_reference_resolution() {
    let s = spectral3();
    let p = &s.pair;
    assert!(p.e0 > 0.0);
    assert!(p.residual < 1e-4, "{}", p.residual);
    assert!((h1_norm_sq(&p.yplus) - 1.0).abs() < 1e-10);
    let wy1 = s.grid.h1_inner_raw(&s.gs.w_complex().values, &ComplexField::from_parts(&s.grid, &p.y1(), &vec![0.0; s.grid.m]).values);
    assert!(wy1 > 0.0);
    assert!(s.op.quadratic_q(&p.yplus).unwrap().abs() < 1e-4);
    assert!(s.op.bilinear_b(&p.yplus, &p.yminus()).unwrap().abs() > 1e-3);
    // 𝓛𝒴₊ = e₀𝒴₊ directly
    let ly = s.op.apply_l(&p.yplus).unwrap();
    let r = ly.sub(&p.yplus.scale_re(p.e0));
    assert!(h1_norm_sq(&r).sqrt() < 1e-4);
}

#[test]
fn eigenvalue_is_resolution_stable() {
    let s = spectral3();
    let fine = make_grid(3, 100.0, 8000, 3.0).unwrap();
    let p2 = eigenpair(&LinearizedOperator::new(&fine, OuterBc::GroundStateRobin)).unwrap();
    assert!(rel(s.pair.e0, p2.e0) < 1e-3, "{} vs {}", s.pair.e0, p2.e0);
}

#[test]
fn eigenvalue_agrees_with_the_coarse_dense_route() {
    // −e₀² is the bottom of P; the coarse dense problem sees it to a few digits
    let coarse = make_grid(3, 100.0, 400, 3.0).unwrap();
    let lam = dense_p_min_eigenvalue(&LinearizedOperator::new(&coarse, OuterBc::GroundStateRobin));
    let e0 = spectral3().pair.e0;
    assert!(lam < 0.0);
    assert!(rel((-lam).sqrt(), e0) < 5e-2, "{} vs {e0}", (-lam).sqrt());
}

#[test]
fn resolvent_round_trip() {
    let s = spectral3();
    let e0 = s.pair.e0;
    let g = ComplexField::from_fn(&s.grid, |r| {
        let b = if r < 6.0 { (-1.0 / (1.0 - r * r / 36.0)).exp() } else { 0.0 };
        Complex64::new(b, -0.3 * b * r)
    });
    let psi = s.op.apply_l(&g).unwrap().sub(&g.scale_re(2.0 * e0));
    let back = resolvent_solve(&s.op, 2.0 * e0, &psi, e0).unwrap();
    assert!(back.max_abs_diff(&g) < 1e-7, "{}", back.max_abs_diff(&g));

    let zero = resolvent_solve(&s.op, 2.0 * e0, &ComplexField::zeros(&s.grid), e0).unwrap();
    assert_eq!(zero.max_abs(), 0.0);

    for c in [e0, -e0, 0.0] {
        assert!(matches!(resolvent_solve(&s.op, c, &psi, e0), Err(Error::SpectralCollision { .. })));
    }
}

#[test]
fn gperp_projection_is_idempotent_and_satisfies_the_constraints() {
    let s = spectral3();
    let proj = GperpProjector::new(&s.op, &s.pair).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let f = proj.project(&random_smooth_field(&s.grid, &mut rng));
        let scale = h1_norm_sq(&f).sqrt();
        assert!(proj.constraints(&f).iter().all(|c| c.abs() < 1e-8 * scale), "{:?}", proj.constraints(&f));
        let ff = proj.project(&f);
        assert!(ff.max_abs_diff(&f) < 1e-8 * f.max_abs());
    }
}

#[test]
fn coercivity_is_positive_and_seed_stable() {
    let s = spectral3();
    let c: Vec<f64> = [1, 2, 3].iter().map(|&seed| coercivity_probe(&s.op, &s.pair, 200, seed).unwrap()).collect();
    assert!(c.iter().all(|&v| v > 0.0), "{c:?}");
    let (lo, hi) = (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(0.0, f64::max));
    assert!(hi / lo < 2.0, "{c:?}");
    assert!(coercivity_probe(&s.op, &s.pair, 0, 1).is_err());
}

#[test]
fn eigenpair_in_dimensions_four_and_five() {
    for dim in [4, 5] {
        let s = spectral(dim);
        assert!(s.pair.e0 > 0.0 && s.pair.residual < 1e-4, "N={dim}");
        assert!(s.op.quadratic_q(&s.pair.yplus).unwrap().abs() < 1e-4);
        assert!(coercivity_probe(&s.op, &s.pair, 200, 0).unwrap() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn b_is_symmetric(seed in 0u64..1000) {
        let s = spectral3();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth_field(&s.grid, &mut rng);
        let g = random_smooth_field(&s.grid, &mut rng);
        let (a, b) = (s.op.bilinear_b(&f, &g).unwrap(), s.op.bilinear_b(&g, &f).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
