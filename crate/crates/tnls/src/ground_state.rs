//! The explicit ground state W, its scaling generator W₁ and the energy-type
//! functionals.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::grid::{h1_norm_sq, ComplexField, RadialGrid, RealField};

/// W(r) = (1 + r²/(N(N−2)))^{−(N−2)/2}
pub fn w_exact(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    (1.0 + r * r / (n * (n - 2.0))).powf(-(n - 2.0) / 2.0)
}

pub fn w_prime_exact(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    -(r / n) * (1.0 + r * r / (n * (n - 2.0))).powf(-n / 2.0)
}

pub fn w_second_exact(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    let q = 1.0 + r * r / (n * (n - 2.0));
    -q.powf(-n / 2.0) / n + r * r / (n * (n - 2.0)) * q.powf(-n / 2.0 - 1.0)
}

/// W₁ = (N−2)/2 · W + r W'
pub fn w1_exact(dim: usize, r: f64) -> f64 {
    (dim as f64 - 2.0) / 2.0 * w_exact(dim, r) + r * w_prime_exact(dim, r)
}

pub fn w1_prime_exact(dim: usize, r: f64) -> f64 {
    dim as f64 / 2.0 * w_prime_exact(dim, r) + r * w_second_exact(dim, r)
}

pub fn eval_w(grid: &Arc<RadialGrid>) -> RealField {
    RealField::from_fn(grid, |r| w_exact(grid.dim, r))
}

pub fn eval_w1(grid: &Arc<RadialGrid>) -> RealField {
    RealField::from_fn(grid, |r| w1_exact(grid.dim, r))
}

/// ∫|f|^{2*}
pub fn crit_integral(f: &ComplexField) -> f64 {
    let g = &f.grid;
    let v: Vec<f64> = f.values.iter().map(|z| g.crit_power(z.norm_sqr())).collect();
    g.integrate_with_tail(&v)
}

pub fn energy(f: &ComplexField) -> f64 {
    0.5 * h1_norm_sq(f) - crit_integral(f) / f.grid.two_star()
}

#[derive(Clone, Debug)]
pub struct GroundStateBundle {
    pub w: RealField,
    pub w1: RealField,
    pub h1_w: f64,
    pub energy_w: f64,
    pub sobolev_cn: f64,
    /// ∫ W^{2*}
    pub crit_w: f64,
}

impl GroundStateBundle {
    pub fn new(grid: &Arc<RadialGrid>) -> Self {
        let w = eval_w(grid);
        let w1 = eval_w1(grid);
        let wc = w.to_complex();
        let h1_w = h1_norm_sq(&wc);
        let crit_w = crit_integral(&wc);
        let energy_w = 0.5 * h1_w - crit_w / grid.two_star();
        let sobolev_cn = crit_w.powf(1.0 / grid.two_star()) / h1_w.sqrt();
        GroundStateBundle { w, w1, h1_w, energy_w, sobolev_cn, crit_w }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.w.grid
    }

    pub fn w_complex(&self) -> ComplexField {
        self.w.to_complex()
    }

    pub fn w1_complex(&self) -> ComplexField {
        self.w1.to_complex()
    }

    pub fn iw(&self) -> ComplexField {
        self.w.to_complex().scale(Complex64::new(0.0, 1.0))
    }

    /// (signed, magnitude) of ‖f‖²_{Ḣ¹} − ‖W‖²_{Ḣ¹}
    pub fn dee(&self, f: &ComplexField) -> (f64, f64) {
        let s = h1_norm_sq(f) - self.h1_w;
        (s, s.abs())
    }

    pub fn variational_check(&self, f: &ComplexField) -> VariationalReport {
        let h1 = h1_norm_sq(f);
        let h1_ratio = h1 / self.h1_w;
        let energy_ratio = energy(f) / self.energy_w;
        let lp = crit_integral(f).powf(1.0 / f.grid.two_star());
        let sobolev_ratio = if h1 > 0.0 { lp / (self.sobolev_cn * h1.sqrt()) } else { 0.0 };
        let sobolev_holds = sobolev_ratio <= 1.0 + 1e-8;
        if h1_ratio > 1.0 + 1e-12 {
            return VariationalReport {
                status: VariationalStatus::NotSubcritical,
                h1_ratio,
                energy_ratio,
                holds: false,
                sobolev_ratio,
                sobolev_holds,
            };
        }
        VariationalReport {
            status: VariationalStatus::Subcritical,
            h1_ratio,
            energy_ratio,
            holds: h1_ratio <= energy_ratio + 1e-8,
            sobolev_ratio,
            sobolev_holds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationalStatus {
    Subcritical,
    NotSubcritical,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalReport {
    pub status: VariationalStatus,
    pub h1_ratio: f64,
    pub energy_ratio: f64,
    pub holds: bool,
    /// ‖f‖_{L^{2*}} / (C_N ‖f‖_{Ḣ¹}), at most 1 by Sobolev
    pub sobolev_ratio: f64,
    pub sobolev_holds: bool,
}
