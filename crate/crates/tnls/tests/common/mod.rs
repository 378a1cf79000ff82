#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use tnls::grid::{make_grid, OuterBc, RadialGrid};
use tnls::ground_state::GroundStateBundle;
use tnls::linearized::{eigenpair, EigenPair, LinearizedOperator};

/// Reference resolution: M = 4000 on [0, 100], stretch 3.
pub fn reference_grid(dim: usize) -> Arc<RadialGrid> {
    make_grid(dim, 100.0, 4000, 3.0).unwrap()
}

pub struct Spectral {
    pub grid: Arc<RadialGrid>,
    pub gs: GroundStateBundle,
    pub op: LinearizedOperator,
    pub pair: EigenPair,
}

fn build(dim: usize) -> Spectral {
    let grid = reference_grid(dim);
    let gs = GroundStateBundle::new(&grid);
    let op = LinearizedOperator::new(&grid, OuterBc::GroundStateRobin);
    let pair = eigenpair(&op).unwrap();
    Spectral { grid, gs, op, pair }
}

/// The N = 3 reference eigenpair, computed once per test binary.
pub fn spectral3() -> &'static Spectral {
    static S: OnceLock<Spectral> = OnceLock::new();
    S.get_or_init(|| build(3))
}

pub fn spectral(dim: usize) -> Spectral {
    build(dim)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    tnls::fit::linear_fit(&lx, &ly).unwrap().slope
}
