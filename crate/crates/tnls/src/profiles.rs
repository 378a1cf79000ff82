//! Approximate threshold solutions W_k^a = W + Σ_{j≤k} e^{−je₀t} Φ_j.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::grid::{h1_norm_sq, ComplexField, RadialGrid};
use crate::ground_state::w_exact;
use crate::linearized::{EigenPair, LinearizedOperator, Resolvent};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub const DEFAULT_K_CAP: usize = 6;

/// R(v) = −i|W+v|^{p−1}(W+v) + iW^p + i p W^{p−1} v₁ − W^{p−1} v₂, pointwise.
pub fn nonlinear_r_raw(grid: &RadialGrid, w: &[f64], v: &[Complex64]) -> Vec<Complex64> {
    let pc = grid.p_c();
    w.iter()
        .zip(v)
        .map(|(&w, &v)| {
            let u = w + v;
            // same rounding path for |u|^{p−1}u and W^p, so R(0) = 0 exactly
            let vp = grid.nl_power(w * w);
            -I * u * grid.nl_power(u.norm_sqr()) + I * (w * vp) + I * (pc * vp * v.re) - vp * v.im
        })
        .collect()
}

pub fn nonlinear_r(v: &ComplexField) -> ComplexField {
    let g = &v.grid;
    let w: Vec<f64> = g.nodes.iter().map(|&r| w_exact(g.dim, r)).collect();
    ComplexField { grid: g.clone(), values: nonlinear_r_raw(g, &w, &v.values) }
}

/// J(z) = −i[(1+z)^{(p+1)/2}(1+z̄)^{(p−1)/2} − 1 − (p+1)/2·z − (p−1)/2·z̄], principal powers.
pub fn j_function(z: Complex64, pc: f64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let a = (one + z).powf((pc + 1.0) / 2.0) * (one + z.conj()).powf((pc - 1.0) / 2.0);
    -I * (a - one - z * ((pc + 1.0) / 2.0) - z.conj() * ((pc - 1.0) / 2.0))
}

/// Taylor coefficients of (Σ aₙ sⁿ)^α with a₀ = 1 (J.C.P. Miller recurrence), per node.
fn power_series(a: &[Vec<Complex64>], alpha: f64, order: usize) -> Vec<Vec<Complex64>> {
    let m = a[0].len();
    let mut b = vec![vec![Complex64::new(1.0, 0.0); m]];
    for n in 1..=order {
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for k in 1..=n {
            let c = (alpha + 1.0) * k as f64 - n as f64;
            if c == 0.0 {
                continue;
            }
            for i in 0..m {
                acc[i] += a[k][i] * b[n - k][i] * c;
            }
        }
        acc.iter_mut().for_each(|v| *v /= n as f64);
        b.push(acc);
    }
    b
}

/// Coefficient of s^{order} in R(Σ_j s^j Φ_j): −iW^p [(1+z)^{(p+1)/2}(1+z̄)^{(p−1)/2}]_{order},
/// z = Σ s^j Φ_j / W (the linear terms of R cancel at every order ≥ 2 not reached by Φ).
pub fn psi_series(grid: &RadialGrid, w: &[f64], phis: &[Vec<Complex64>], order: usize) -> Vec<Complex64> {
    let m = w.len();
    let pc = grid.p_c();
    let zero = vec![Complex64::new(0.0, 0.0); m];
    let z: Vec<Vec<Complex64>> = (0..=order)
        .map(|j| {
            if j == 0 {
                vec![Complex64::new(1.0, 0.0); m]
            } else if j <= phis.len() {
                phis[j - 1].iter().zip(w).map(|(p, w)| p / w).collect()
            } else {
                zero.clone()
            }
        })
        .collect();
    let zc: Vec<Vec<Complex64>> = z.iter().map(|v| v.iter().map(|c| c.conj()).collect()).collect();
    let a = power_series(&z, (pc + 1.0) / 2.0, order);
    let b = power_series(&zc, (pc - 1.0) / 2.0, order);
    (0..m)
        .map(|i| {
            let p: Complex64 = (0..=order).map(|j| a[j][i] * b[order - j][i]).sum();
            -I * w[i].powf(pc) * p
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SourceRoute {
    /// Exact power-series expansion of the nonlinearity.
    #[default]
    Series,
    /// Chebyshev sampling in s and extrapolation (extract_next_source).
    Sampled,
}

#[derive(Clone, Debug)]
pub struct ProfileSet {
    pub a: f64,
    pub k: usize,
    pub phis: Vec<ComplexField>,
    /// Ψ_1..Ψ_{k−1}, the sources that produced Φ_2..Φ_k
    pub psis: Vec<ComplexField>,
    pub e0: f64,
    pub route: SourceRoute,
    w: Vec<f64>,
}

impl ProfileSet {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.phis[0].grid
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    fn phi_values(&self) -> Vec<Vec<Complex64>> {
        self.phis.iter().map(|p| p.values.clone()).collect()
    }

    /// v(s) = Σ_j s^j Φ_j
    pub fn v_of_s(&self, s: f64) -> Vec<Complex64> {
        let m = self.w.len();
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        let mut sj = 1.0;
        for p in &self.phis {
            sj *= s;
            v.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b * sj);
        }
        v
    }

    pub fn max_ratio(&self, s: f64) -> f64 {
        self.v_of_s(s).iter().zip(&self.w).map(|(v, w)| v.norm() / w).fold(0.0, f64::max)
    }

    /// Largest s with max|v(s)|/W ≤ bound (bisection; v is a polynomial in s).
    pub fn s_for_ratio(&self, bound: f64) -> f64 {
        if self.a == 0.0 {
            return 1.0;
        }
        let mut hi = 1.0;
        while self.max_ratio(hi) < bound && hi < 1e6 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.max_ratio(mid) < bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// The order-k′ truncation W_{k′}^a, k′ ≤ k.
    pub fn truncated(&self, k: usize) -> Result<ProfileSet> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidArgument(format!("truncation order {k} not in 1..={}", self.k)));
        }
        let mut p = self.clone();
        p.k = k;
        p.phis.truncate(k);
        p.psis.truncate(k - 1);
        Ok(p)
    }

    pub fn assemble_s(&self, s: f64) -> ComplexField {
        let v = self.v_of_s(s);
        let values = v.iter().zip(&self.w).map(|(v, w)| v + w).collect();
        ComplexField { grid: self.grid().clone(), values }
    }
}

pub fn assemble_wka(ps: &ProfileSet, t: f64) -> ComplexField {
    ps.assemble_s((-ps.e0 * t).exp())
}

pub fn build_profiles(a: f64, k: usize, op: &LinearizedOperator, pair: &EigenPair) -> Result<ProfileSet> {
    build_profiles_with(a, k, op, pair, SourceRoute::Series)
}

pub fn build_profiles_with(
    a: f64,
    k: usize,
    op: &LinearizedOperator,
    pair: &EigenPair,
    route: SourceRoute,
) -> Result<ProfileSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("profile order k must be at least 1".into()));
    }
    let g = &op.grid;
    let w: Vec<f64> = g.nodes.iter().map(|&r| w_exact(g.dim, r)).collect();
    let mut ps = ProfileSet {
        a,
        k: 1,
        phis: vec![pair.yplus.scale_re(a)],
        psis: Vec::new(),
        e0: pair.e0,
        route,
        w,
    };
    for j in 1..k {
        let psi = match route {
            SourceRoute::Series => {
                ComplexField { grid: g.clone(), values: psi_series(g, &ps.w, &ps.phi_values(), j + 1) }
            }
            SourceRoute::Sampled => extract_next_source(&ps, 16)?.psi,
        };
        let res = Resolvent::new(op, (j + 1) as f64 * pair.e0, pair.e0)?;
        let phi = res.solve(&psi)?.scale_re(-1.0);
        ps.psis.push(psi);
        ps.phis.push(phi);
        ps.k = j + 1;
    }
    Ok(ps)
}

/// ε_k(t) = ∂ₜv_k + 𝓛v_k + R(v_k).
pub fn eval_residual(ps: &ProfileSet, op: &LinearizedOperator, t: f64) -> Result<ComplexField> {
    let s = (-ps.e0 * t).exp();
    let ratio = ps.max_ratio(s);
    if ratio > 0.5 {
        return Err(Error::AmplitudeTooLarge(ratio));
    }
    Ok(ComplexField { grid: ps.grid().clone(), values: residual_at_s(ps, op, s) })
}

fn residual_at_s(ps: &ProfileSet, op: &LinearizedOperator, s: f64) -> Vec<Complex64> {
    let g = ps.grid();
    let v = ps.v_of_s(s);
    let m = v.len();
    let mut dv = vec![Complex64::new(0.0, 0.0); m];
    let mut sj = 1.0;
    for (j, p) in ps.phis.iter().enumerate() {
        sj *= s;
        let c = -((j + 1) as f64) * ps.e0 * sj;
        dv.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b * c);
    }
    let lv = op.apply_l_raw(&v);
    let rv = nonlinear_r_raw(g, &ps.w, &v);
    (0..m).map(|i| dv[i] + lv[i] + rv[i]).collect()
}

#[derive(Clone, Debug)]
pub struct ExtractedSource {
    pub psi: ComplexField,
    pub s0: f64,
    pub samples: usize,
    /// Lebesgue constant of the extrapolation to s = 0
    pub condition: f64,
}

/// Ψ_k from samples of R(Σ s^jΦ_j) at Chebyshev points s ∈ [−s₀, s₀], with the
/// already-known lower-order sources removed, divided by s^{k+1} and
/// interpolated at s = 0 (barycentric form). s₀ keeps max|v|/W ≤ ¼.
pub fn extract_next_source(ps: &ProfileSet, samples: usize) -> Result<ExtractedSource> {
    let g = ps.grid();
    let m = ps.w.len();
    let order = ps.k + 1;
    if ps.a == 0.0 {
        return Ok(ExtractedSource { psi: ComplexField::zeros(g), s0: 0.0, samples, condition: 1.0 });
    }
    let s0 = ps.s_for_ratio(0.25);
    let n = samples.max(order + 1);
    let theta: Vec<f64> = (0..n).map(|j| std::f64::consts::PI * (j as f64 + 0.5) / n as f64).collect();
    let xs: Vec<f64> = theta.iter().map(|t| s0 * t.cos()).collect();
    let bw: Vec<f64> = theta.iter().enumerate().map(|(j, t)| if j % 2 == 0 { t.sin() } else { -t.sin() }).collect();
    let c: Vec<f64> = bw.iter().zip(&xs).map(|(b, x)| b / (0.0 - x)).collect();
    let csum: f64 = c.iter().sum();
    let condition = c.iter().map(|v| v.abs()).sum::<f64>() / csum.abs();
    if condition > 1e12 {
        return Err(Error::IllConditioned(condition));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    for (x, cj) in xs.iter().zip(&c) {
        let v = ps.v_of_s(*x);
        let mut h = nonlinear_r_raw(g, &ps.w, &v);
        for (idx, psi) in ps.psis.iter().enumerate() {
            let sp = x.powi(idx as i32 + 2);
            h.iter_mut().zip(&psi.values).for_each(|(a, b)| *a -= b * sp);
        }
        let inv = 1.0 / x.powi(order as i32);
        acc.iter_mut().zip(&h).for_each(|(a, b)| *a += b * (inv * cj / csum));
    }
    Ok(ExtractedSource { psi: ComplexField { grid: g.clone(), values: acc }, s0, samples: n, condition })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRate {
    pub k: usize,
    pub a: f64,
    pub rate: f64,
    pub expected: f64,
    pub r2: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub eps_start: f64,
    pub eps_end: f64,
}

/// Log-linear fit of ‖ε_k(t)‖_{Ḣ¹} over the asymptotic window: from s = s_½/10
/// (s_½: max|v|/W = ½) over `decades` decades of expected decay.
pub fn residual_rate(ps: &ProfileSet, op: &LinearizedOperator, decades: f64, points: usize) -> Result<ResidualRate> {
    let s_start = ps.s_for_ratio(0.5) / 10.0;
    let kk = (ps.k + 1) as f64;
    let s_end = s_start * 10f64.powf(-decades / kk);
    let t_start = -s_start.ln() / ps.e0;
    let t_end = -s_end.ln() / ps.e0;
    let g = ps.grid();
    let mut ts = Vec::with_capacity(points);
    let mut ls = Vec::with_capacity(points);
    for i in 0..points {
        let t = t_start + (t_end - t_start) * i as f64 / (points - 1) as f64;
        let eps = residual_at_s(ps, op, (-ps.e0 * t).exp());
        let nrm = g.h1_inner_raw(&eps, &eps).sqrt();
        ts.push(t);
        ls.push(nrm.ln());
    }
    let LinearFit { slope, r2, .. } = linear_fit(&ts, &ls).ok_or(Error::WindowEmpty)?;
    Ok(ResidualRate {
        k: ps.k,
        a: ps.a,
        rate: -slope,
        expected: kk * ps.e0,
        r2,
        t_start,
        t_end,
        eps_start: ls[0].exp(),
        eps_end: ls[points - 1].exp(),
    })
}

/// Fit of ‖W_k^a(t)‖² − ‖W‖² ≈ c₁ s + c₂ s² over small s; returns c₁.
pub fn h1_excess_leading_coefficient(ps: &ProfileSet, h1_w: f64) -> f64 {
    let s_hi = ps.s_for_ratio(0.5) / 20.0;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..12 {
        let s = s_hi * 0.7f64.powi(i);
        let d = h1_norm_sq(&ps.assemble_s(s)) - h1_w;
        xs.push(s);
        ys.push(d / s);
    }
    linear_fit(&xs, &ys).map(|f| f.intercept).unwrap_or(f64::NAN)
}

/// Initial-data correction suppressing the spurious unstable mode excited by the
/// spatial truncation error of W. With F_h = Δ_hW + W^{p_c} (flow Laplacian
/// with outer condition `bc`), v = u − W obeys v' = −𝓛v + iF_h, whose 𝒴₋
/// coefficient c satisfies c' = e₀c + a₋ with a₋ = B(𝒴₊, iF_h)/B(𝒴₊, 𝒴₋);
/// adding −(a₋/e₀)𝒴₋ keeps it stationary. Size O(h²).
pub fn defect_correction(op: &LinearizedOperator, pair: &EigenPair, bc: crate::grid::OuterBc) -> Result<ComplexField> {
    let g = &op.grid;
    let w: Vec<f64> = g.nodes.iter().map(|&r| w_exact(g.dim, r)).collect();
    let tw = g.laplacian_tri(bc).apply(&w);
    let pc = g.p_c();
    let fh: Vec<f64> = tw.iter().zip(g.volumes()).zip(&w).map(|((t, m), w)| t / m + w.powf(pc)).collect();
    let forcing = ComplexField::from_parts(g, &vec![0.0; g.m], &fh);
    let ym = pair.yminus();
    let bpm = op.bilinear_b(&pair.yplus, &ym)?;
    if bpm.abs() < 1e-8 {
        return Err(Error::DegenerateProjection(bpm));
    }
    let a_minus = op.bilinear_b(&pair.yplus, &forcing)? / bpm;
    Ok(ym.scale_re(-a_minus / pair.e0))
}
