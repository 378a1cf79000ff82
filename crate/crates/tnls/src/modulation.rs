//! Modulation decomposition u = ((1+α)W + ũ)_{[θ,μ]} with ũ ⊥ iW, W₁, tracking
//! along trajectories and decay-rate fits.
//!
//! Convention: f_{[θ,μ]}(r) = e^{iθ} μ^{−(N−2)/2} f(r/μ) (as in `rescale_phase`),
//! so u = W_{[θ,μ]} is decomposed with exactly these (θ, μ). The orthogonality
//! conditions (u_{[−θ,1/μ]}, g)_{Ḣ¹} = (u, g_{[θ,μ]})_{Ḣ¹} are evaluated with
//! the closed-form g_{[θ,μ]}, so u itself is never resampled inside Newton.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{h1_norm_sq, rescale_phase, ComplexField, RadialGrid};
use crate::ground_state::{w1_exact, w_exact, GroundStateBundle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulationConfig {
    /// trust region: d(u) < δ₀‖W‖²
    pub delta0: f64,
    pub max_iter: usize,
    /// Newton tolerance relative to ‖W‖²
    pub tol: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig { delta0: 0.1, max_iter: 50, tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct ModulationState {
    pub theta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub utilde: ComplexField,
    pub dee_signed: f64,
    pub dee_mag: f64,
    pub ok: bool,
    /// max over g ∈ {iW, W₁, W} of |(ũ, g)| / (‖W‖‖ũ‖)
    pub ortho_residual: f64,
    /// |F(θ,μ)|/‖W‖² at the Newton solution
    pub newton_residual: f64,
    /// ‖ũ(resampled) − ũ(projected)‖/‖W‖: size of the final exact projection
    pub projection_shift: f64,
    pub iterations: usize,
}

/// Evaluates closed-form modulated test functions and Ḣ¹ pairings on a grid.
#[derive(Clone, Debug)]
pub struct Modulator {
    pub grid: Arc<RadialGrid>,
    pub cfg: ModulationConfig,
    h1_w: f64,
    energy_w: f64,
    lambda_w: f64,
    w: ComplexField,
    w1: ComplexField,
}

fn modulated(grid: &RadialGrid, f: impl Fn(usize, f64) -> f64, theta: f64, mu: f64) -> Vec<Complex64> {
    let amp = Complex64::from_polar(mu.powf(-(grid.dim as f64 - 2.0) / 2.0), theta);
    grid.nodes.iter().map(|&r| amp * f(grid.dim, r / mu)).collect()
}

fn wrap(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}

impl Modulator {
    pub fn new(gs: &GroundStateBundle, cfg: ModulationConfig) -> Result<Self> {
        let grid = gs.grid().clone();
        let w = gs.w_complex();
        let lambda_w = concentration_scale_with(&w, gs.energy_w)?;
        Ok(Modulator {
            grid,
            cfg,
            h1_w: gs.h1_w,
            energy_w: gs.energy_w,
            lambda_w,
            w,
            w1: gs.w1_complex(),
        })
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    /// ((u, (iW)_{[θ,μ]}), (u, (W₁)_{[θ,μ]})) in Ḣ¹.
    fn conditions(&self, u: &[Complex64], theta: f64, mu: f64) -> [f64; 2] {
        let g = &self.grid;
        let iw = modulated(g, w_exact, theta + PI / 2.0, mu);
        let w1 = modulated(g, w1_exact, theta, mu);
        [g.h1_inner_raw(u, &iw), g.h1_inner_raw(u, &w1)]
    }

    /// Seed (θ, μ) from the phase at the modulus peak and the concentration scale.
    pub fn seed(&self, u: &ComplexField) -> Result<(f64, f64)> {
        let (imax, _) = u
            .values
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        let theta = u.values[imax].arg();
        let lam = concentration_scale_with(u, self.energy_w)?;
        Ok((theta, self.lambda_w / lam))
    }

    pub fn fit(&self, u: &ComplexField) -> Result<ModulationState> {
        self.fit_from(u, None)
    }

    /// Newton on (θ, log μ), from `start` or from `seed`.
    pub fn fit_from(&self, u: &ComplexField, start: Option<(f64, f64)>) -> Result<ModulationState> {
        if !u.grid.same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let h1 = h1_norm_sq(u);
        let dee_signed = h1 - self.h1_w;
        let dee_mag = dee_signed.abs();
        if dee_mag >= self.cfg.delta0 * self.h1_w {
            return Err(Error::NotNearW(dee_mag / self.h1_w));
        }
        let (mut theta, mu0) = match start {
            Some(s) => s,
            None => self.seed(u)?,
        };
        let mut nu = mu0.ln();
        let norm = |f: [f64; 2]| f[0].hypot(f[1]);
        let scale = self.h1_w;
        let mut f = self.conditions(&u.values, theta, nu.exp());
        let mut it = 0;
        while norm(f) > self.cfg.tol * scale {
            if it >= self.cfg.max_iter {
                return Err(Error::NewtonStall(it, norm(f) / scale));
            }
            it += 1;
            let h = 1e-6;
            let fp = self.conditions(&u.values, theta + h, nu.exp());
            let fm = self.conditions(&u.values, theta - h, nu.exp());
            let gp = self.conditions(&u.values, theta, (nu + h).exp());
            let gm = self.conditions(&u.values, theta, (nu - h).exp());
            let j = [
                [(fp[0] - fm[0]) / (2.0 * h), (gp[0] - gm[0]) / (2.0 * h)],
                [(fp[1] - fm[1]) / (2.0 * h), (gp[1] - gm[1]) / (2.0 * h)],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 * scale * scale || !det.is_finite() {
                return Err(Error::NewtonStall(it, norm(f) / scale));
            }
            let dt = -(j[1][1] * f[0] - j[0][1] * f[1]) / det;
            let dn = -(-j[1][0] * f[0] + j[0][0] * f[1]) / det;
            // damped update
            let mut step = 1.0;
            loop {
                let (t2, n2) = (theta + step * dt, nu + step * dn);
                let f2 = self.conditions(&u.values, t2, n2.exp());
                if norm(f2) < norm(f) || step < 1e-3 {
                    theta = t2;
                    nu = n2;
                    f = f2;
                    break;
                }
                step *= 0.5;
            }
        }
        theta = wrap(theta);
        let mu = nu.exp();
        let g = &self.grid;
        let w_mod = modulated(g, w_exact, theta, mu);
        let alpha = g.h1_inner_raw(&u.values, &w_mod) / self.h1_w - 1.0;

        let back = rescale_phase(u, -theta, 1.0 / mu)?;
        let raw = back.sub(&self.w.scale_re(1.0 + alpha));
        let utilde = self.project_out(&raw);
        let projection_shift = (h1_norm_sq(&raw.sub(&utilde)) / self.h1_w).sqrt();
        let un = h1_norm_sq(&utilde).sqrt();
        let wn = self.h1_w.sqrt();
        let iw = self.w.scale(Complex64::new(0.0, 1.0));
        let ortho_residual = if un > 0.0 {
            [&iw, &self.w1, &self.w]
                .iter()
                .map(|gf| g.h1_inner_raw(&utilde.values, &gf.values).abs() / (wn * un))
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        Ok(ModulationState {
            theta,
            mu,
            alpha,
            utilde,
            dee_signed,
            dee_mag,
            ok: dee_mag < self.cfg.delta0 * self.h1_w,
            ortho_residual,
            newton_residual: norm(f) / scale,
            projection_shift,
            iterations: it,
        })
    }

    /// Ḣ¹-orthogonal projection onto {W, iW, W₁}^⊥ (real inner product).
    pub fn project_out(&self, f: &ComplexField) -> ComplexField {
        let g = &self.grid;
        let basis = [self.w.clone(), self.w.scale(Complex64::new(0.0, 1.0)), self.w1.clone()];
        let gram = Matrix3::from_fn(|i, j| g.h1_inner_raw(&basis[i].values, &basis[j].values));
        let rhs = Vector3::from_fn(|i, _| g.h1_inner_raw(&f.values, &basis[i].values));
        let c = gram.lu().solve(&rhs).unwrap_or_else(Vector3::zeros);
        let mut out = f.clone();
        for (b, ci) in basis.iter().zip(c.iter()) {
            out = out.axpy(Complex64::new(-ci, 0.0), b);
        }
        out
    }
}

pub fn fit_modulation(u: &ComplexField, gs: &GroundStateBundle) -> Result<ModulationState> {
    Modulator::new(gs, ModulationConfig::default())?.fit(u)
}

/// Integrand of ∫|∇u|² in the computational variable ξ, with the origin point prepended.
fn gradient_density(u: &ComplexField) -> (Vec<f64>, Vec<f64>) {
    let g = &u.grid;
    let du = g.derivative(&u.values);
    let h = 1.0 / g.m as f64;
    let mut xi = vec![0.0];
    let mut dens = vec![0.0];
    for (i, (r, d)) in g.nodes.iter().zip(&du).enumerate() {
        let x = (i + 1) as f64 * h;
        let (_, jac) = g.r_of_xi(x);
        xi.push(x);
        dens.push(g.sphere() * r.powi(g.dim as i32 - 1) * d.norm_sqr() * jac);
    }
    (xi, dens)
}

/// ∫_{ξ_j}^{x} of the cubic through the 4 points around interval j (2-point Gauss, exact).
fn partial_cubic(xi: &[f64], f: &[f64], j: usize, x: f64) -> f64 {
    let n = xi.len();
    let s = j.saturating_sub(1).min(n - 4);
    let pts = &xi[s..s + 4];
    let vals = &f[s..s + 4];
    let lag = |t: f64| -> f64 {
        (0..4)
            .map(|a| {
                let mut l = 1.0;
                for b in 0..4 {
                    if a != b {
                        l *= (t - pts[b]) / (pts[a] - pts[b]);
                    }
                }
                l * vals[a]
            })
            .sum()
    };
    let (a, b) = (xi[j], x);
    let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
    let q = hw / 3f64.sqrt();
    hw * (lag(c - q) + lag(c + q))
}

/// λ with ∫_{r ≤ 1/λ}|∇u|² = E(W), taking the smallest such radius.
pub fn concentration_scale(u: &ComplexField, gs: &GroundStateBundle) -> Result<f64> {
    if !u.grid.same_as(gs.grid()) {
        return Err(Error::GridMismatch);
    }
    concentration_scale_with(u, gs.energy_w)
}

fn concentration_scale_with(u: &ComplexField, energy_w: f64) -> Result<f64> {
    let total = h1_norm_sq(u);
    if total < 2.0 * energy_w {
        return Err(Error::Unsolvable(total, energy_w));
    }
    let (xi, f) = gradient_density(u);
    let mut acc = 0.0;
    for j in 0..xi.len() - 1 {
        let seg = partial_cubic(&xi, &f, j, xi[j + 1]);
        if acc + seg >= energy_w {
            let (mut lo, mut hi) = (xi[j], xi[j + 1]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if acc + partial_cubic(&xi, &f, j, mid) < energy_w {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (rho, _) = u.grid.r_of_xi(0.5 * (lo + hi));
            return Ok(1.0 / rho);
        }
        acc += seg;
    }
    Err(Error::Unsolvable(acc, energy_w))
}

#[derive(Clone, Debug)]
pub struct TrackedSample {
    pub t: f64,
    pub state: Option<ModulationState>,
    pub dee_mag: f64,
    pub error: Option<String>,
}

/// Fit every field, warm-starting from the previous accepted (θ, μ).
pub fn track(fields: &[(f64, ComplexField)], m: &Modulator) -> Vec<TrackedSample> {
    let mut prev: Option<(f64, f64)> = None;
    let mut out = Vec::with_capacity(fields.len());
    for (t, u) in fields {
        let dee_mag = (h1_norm_sq(u) - m.h1_w).abs();
        let res = m.fit_from(u, prev).or_else(|e| if prev.is_some() { m.fit_from(u, None) } else { Err(e) });
        match res {
            Ok(mut s) => {
                if let Some((pt, _)) = prev {
                    // keep θ continuous in time
                    s.theta = pt + wrap(s.theta - pt);
                }
                prev = Some((s.theta, s.mu));
                out.push(TrackedSample { t: *t, dee_mag, state: Some(s), error: None });
            }
            Err(e) => out.push(TrackedSample { t: *t, dee_mag, state: None, error: Some(e.to_string()) }),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r2: f64,
    pub samples: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Least squares of log dee_mag vs t over samples with ok states and
/// dee_mag ∈ [lo, hi]·‖W‖², on the decaying branch (up to the smallest dee_mag).
pub fn fit_rate_window(series: &[TrackedSample], h1_w: f64, lo: f64, hi: f64) -> Result<RateFit> {
    let t_min = series
        .iter()
        .filter_map(|s| s.state.as_ref().filter(|st| st.ok).map(|st| (s.t, st.dee_mag)))
        .fold((f64::INFINITY, f64::INFINITY), |acc, (t, d)| if d < acc.1 { (t, d) } else { acc })
        .0;
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for s in series.iter().filter(|s| s.t <= t_min) {
        if let Some(st) = &s.state {
            let d = st.dee_mag / h1_w;
            if st.ok && d >= lo && d <= hi {
                ts.push(s.t);
                ls.push(st.dee_mag.ln());
            }
        }
    }
    if ts.len() < 3 {
        return Err(Error::WindowEmpty);
    }
    let f = linear_fit(&ts, &ls).ok_or(Error::WindowEmpty)?;
    Ok(RateFit { rate: f.slope.abs(), r2: f.r2, samples: ts.len(), t_start: ts[0], t_end: ts[ts.len() - 1] })
}

pub fn fit_rate(series: &[TrackedSample], h1_w: f64) -> Result<RateFit> {
    fit_rate_window(series, h1_w, 1e-8, 1e-2)
}

/// max over consecutive ok samples of |Δμ/Δt| / (μ·d(u)), the empirical
/// modulation-derivative constant in this scaling convention.
pub fn derivative_bound_ratio(series: &[TrackedSample]) -> f64 {
    let ok: Vec<(f64, &ModulationState)> =
        series.iter().filter_map(|s| s.state.as_ref().filter(|st| st.ok).map(|st| (s.t, st))).collect();
    ok.windows(2)
        .map(|p| {
            let (t0, a) = p[0];
            let (t1, b) = p[1];
            let d = 0.5 * (a.dee_mag + b.dee_mag);
            let mu = 0.5 * (a.mu + b.mu);
            if d > 0.0 && t1 > t0 {
                ((b.mu - a.mu) / (t1 - t0)).abs() / (mu * d)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_into_principal_range() {
        for &t in &[0.0, 3.0, -3.0, 7.0, -7.0, PI] {
            let w = wrap(t);
            assert!(w > -PI && w <= PI);
            let k = (w - t) / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-12);
        }
    }
}
