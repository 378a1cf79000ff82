//! Localized virial quantities G_R, F_R, A_R, their cutoffs, and the check of
//! G_R′ = 8(∫|∇u|² − ∫|u|^{2*}) + A_R along computed trajectories.

use std::sync::Arc;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{h1_norm_sq, ComplexField, RadialGrid};
use crate::ground_state::{crit_integral, energy, GroundStateBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    /// r² on [0,1], 0 beyond 2
    Sec3,
    /// r² on [0,1], φ ≥ 0, φ″ ≤ 2, support [0, 7]
    Sec4,
    /// ψ = 1 on [0,1], 0 beyond 2
    Mass,
}

/// Unscaled profile: r² or 1 on [0,1], a degree-7 Hermite blend on [1, L], 0 beyond.
#[derive(Clone, Copy, Debug)]
struct Profile {
    kind: CutoffKind,
    end: f64,
    /// blend in t = (r−1)/(L−1), monomial coefficients
    coef: [f64; 8],
}

impl Profile {
    fn new(kind: CutoffKind) -> Self {
        let (end, left): (f64, [f64; 4]) = match kind {
            CutoffKind::Sec3 => (2.0, [1.0, 2.0, 2.0, 0.0]),
            CutoffKind::Sec4 => (7.0, [1.0, 2.0, 2.0, 0.0]),
            CutoffKind::Mass => (2.0, [1.0, 0.0, 0.0, 0.0]),
        };
        let h: f64 = end - 1.0;
        // p^{(d)}(0) = left_d h^d, p^{(d)}(1) = 0
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for d in 0..4 {
            let fall = |k: usize| (0..d).map(|j| (k - j) as f64).product::<f64>();
            a[(d, d)] = fall(d);
            b[d] = left[d] * h.powi(d as i32);
            for k in d..8 {
                a[(4 + d, k)] = fall(k);
            }
        }
        let c = a.lu().solve(&b).expect("Hermite system is nonsingular");
        let mut coef = [0.0; 8];
        coef.iter_mut().zip(c.iter()).for_each(|(x, y)| *x = *y);
        Profile { kind, end, coef }
    }

    /// (φ, φ′, φ″, φ‴, φ⁗) at r.
    fn eval(&self, r: f64) -> [f64; 5] {
        let inner = match self.kind {
            CutoffKind::Mass => [1.0, 0.0, 0.0, 0.0, 0.0],
            _ => [r * r, 2.0 * r, 2.0, 0.0, 0.0],
        };
        if r <= 1.0 {
            return inner;
        }
        if r >= self.end {
            return [0.0; 5];
        }
        let h = self.end - 1.0;
        let t = (r - 1.0) / h;
        let mut out = [0.0; 5];
        for (d, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in (d..8).rev() {
                let fall: f64 = (0..d).map(|j| (k - j) as f64).product();
                acc = acc * t + self.coef[k] * fall;
            }
            // Horner above accumulates Σ c_k fall t^{k−d}
            *o = acc / h.powi(d as i32);
        }
        out
    }
}

/// Cutoff φ_R(r) = R²φ(r/R) (ψ(r/R) for the mass kind) sampled on a grid.
#[derive(Clone, Debug)]
pub struct Cutoff {
    pub kind: CutoffKind,
    pub r_scale: f64,
    pub grid: Arc<RadialGrid>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub lap: Vec<f64>,
    /// (Δφ_R)′, continuous where Δ²φ_R jumps
    pub dlap: Vec<f64>,
    pub bilap: Vec<f64>,
}

impl Cutoff {
    pub fn support_end(&self) -> f64 {
        Profile::new(self.kind).end * self.r_scale
    }

    /// Closed-form (φ_R, φ_R′, φ_R″, Δφ_R, Δ²φ_R) at r.
    pub fn eval(&self, r: f64) -> [f64; 5] {
        let v = eval_scaled(&Profile::new(self.kind), self.r_scale, self.grid.dim, r);
        [v[0], v[1], v[2], v[3], v[5]]
    }
}

/// (φ, φ′, φ″, Δφ, (Δφ)′, Δ²φ) of the scaled profile.
fn eval_scaled(p: &Profile, big_r: f64, dim: usize, r: f64) -> [f64; 6] {
    let n = dim as f64;
    // exact inner piece: φ_R = r² (ψ = 1) on r ≤ R without rescaling round-off
    if r <= big_r {
        return match p.kind {
            CutoffKind::Mass => [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            _ => [r * r, 2.0 * r, 2.0, 2.0 * n, 0.0, 0.0],
        };
    }
    let [f, f1, f2, f3, f4] = p.eval(r / big_r);
    let a = match p.kind {
        CutoffKind::Mass => 1.0,
        _ => big_r * big_r,
    };
    // a φ(r/R): derivatives scale by a / R^d
    let phi = a * f;
    let d1 = a * f1 / big_r;
    let d2 = a * f2 / (big_r * big_r);
    let d3 = a * f3 / big_r.powi(3);
    let d4 = a * f4 / big_r.powi(4);
    let lap = d2 + (n - 1.0) * d1 / r;
    let dlap = d3 + (n - 1.0) * (d2 / r - d1 / (r * r));
    let bilap = d4 + 2.0 * (n - 1.0) * d3 / r + (n - 1.0) * (n - 3.0) * (d2 / (r * r) - d1 / (r * r * r));
    [phi, d1, d2, lap, dlap, bilap]
}

pub fn make_cutoff(kind: CutoffKind, big_r: f64, grid: &Arc<RadialGrid>) -> Result<Cutoff> {
    if !(big_r > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff radius {big_r} must be positive")));
    }
    let p = Profile::new(kind);
    let end = p.end * big_r;
    if end > grid.r_max {
        return Err(Error::SupportExceedsGrid(end, grid.r_max));
    }
    let mut c = Cutoff {
        kind,
        r_scale: big_r,
        grid: grid.clone(),
        phi: Vec::with_capacity(grid.m),
        dphi: Vec::with_capacity(grid.m),
        d2phi: Vec::with_capacity(grid.m),
        lap: Vec::with_capacity(grid.m),
        dlap: Vec::with_capacity(grid.m),
        bilap: Vec::with_capacity(grid.m),
    };
    for &r in &grid.nodes {
        let [f, d1, d2, l, dl, bl] = eval_scaled(&p, big_r, grid.dim, r);
        c.phi.push(f);
        c.dphi.push(d1);
        c.d2phi.push(d2);
        c.lap.push(l);
        c.dlap.push(dl);
        c.bilap.push(bl);
    }
    check_constraints(&c)?;
    Ok(c)
}

fn check_constraints(c: &Cutoff) -> Result<()> {
    let r2 = c.r_scale * c.r_scale;
    let end = c.support_end();
    for (i, &r) in c.grid.nodes.iter().enumerate() {
        let phi = c.phi[i];
        let fail = |m: String| Err(Error::ConstraintViolated(m));
        match c.kind {
            CutoffKind::Sec3 | CutoffKind::Sec4 => {
                if r <= c.r_scale && phi != r * r {
                    return fail(format!("φ_R({r}) ≠ r²"));
                }
                if r >= end && phi != 0.0 {
                    return fail(format!("φ_R({r}) ≠ 0 outside support"));
                }
                if c.kind == CutoffKind::Sec4 {
                    if phi < -1e-12 * r2 {
                        return fail(format!("φ_R({r}) = {phi} < 0"));
                    }
                    if c.d2phi[i] > 2.0 + 1e-12 {
                        return fail(format!("φ_R″({r}) = {} > 2", c.d2phi[i]));
                    }
                }
            }
            CutoffKind::Mass => {
                if r <= c.r_scale && phi != 1.0 || r >= end && phi != 0.0 || !(-1e-14..=1.0 + 1e-14).contains(&phi) {
                    return fail(format!("ψ({r}) = {phi} out of range"));
                }
            }
        }
    }
    Ok(())
}

fn check_grid(u: &ComplexField, c: &Cutoff) -> Result<()> {
    if u.grid.same_as(&c.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// G_R = 2 Im ∫ ū ∂ᵣu φ_R′.
pub fn g_r(u: &ComplexField, c: &Cutoff) -> Result<f64> {
    check_grid(u, c)?;
    let g = &u.grid;
    let du = g.derivative(&u.values);
    let f: Vec<f64> = u.values.iter().zip(&du).zip(&c.dphi).map(|((a, b), p)| 2.0 * (a.conj() * b).im * p).collect();
    Ok(g.integrate(&f))
}

/// F_R = ∫|u|² ψ(r/R).
pub fn f_r(u: &ComplexField, c: &Cutoff) -> Result<f64> {
    check_grid(u, c)?;
    if c.kind != CutoffKind::Mass {
        return Err(Error::InvalidArgument("F_R needs a mass cutoff".into()));
    }
    let f: Vec<f64> = u.values.iter().zip(&c.phi).map(|(z, p)| z.norm_sqr() * p).collect();
    Ok(u.grid.integrate(&f))
}

/// A_R = ∫|∂ᵣu|²(4φ_R″ − 8) + ∫|u|^{2*}(8 − (4/N)Δφ_R) − ∫|u|²Δ²φ_R.
/// Outside the support the first integrand is −8|∂ᵣu|², whose exterior part
/// comes from the fitted tail. Δ²φ_R jumps at R and at the support end, which
/// costs the quadrature O(h·jump); the last term is therefore integrated by
/// parts as ∫2Re(ū∂ᵣu)(Δφ_R)′, whose integrand is continuous.
pub fn a_r(u: &ComplexField, c: &Cutoff) -> Result<f64> {
    check_grid(u, c)?;
    let g = &u.grid;
    let n = g.dim as f64;
    let du = g.derivative(&u.values);
    let grad: Vec<f64> = du.iter().zip(&c.d2phi).map(|(d, p)| d.norm_sqr() * (4.0 * p - 8.0)).collect();
    let pot: Vec<f64> =
        u.values.iter().zip(&c.lap).map(|(z, l)| g.crit_power(z.norm_sqr()) * (8.0 - 4.0 / n * l)).collect();
    let mass: Vec<f64> =
        u.values.iter().zip(&du).zip(&c.dlap).map(|((z, d), l)| 2.0 * (z.conj() * d).re * l).collect();
    let tail = -8.0 * g.h1_tail(&u.values, &u.values);
    Ok(g.integrate(&grad) + tail + g.integrate_with_tail(&pot) + g.integrate(&mass))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityForm {
    /// −16/(N−2)·(‖u‖² − ‖W‖²) + A_R, valid at E(u) = E(W)
    Threshold,
    /// 8(∫|∇u|² − ∫|u|^{2*}) + A_R
    General,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VirialRow {
    pub t: f64,
    #[serde(rename = "G_R")]
    pub g_r: f64,
    pub dgdt_fd: f64,
    pub rhs_identity: f64,
    #[serde(rename = "A_R")]
    pub a_r: f64,
    pub mismatch: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VirialReport {
    pub form: IdentityForm,
    /// set when the threshold form was requested but E(u₀) ≠ E(W)
    pub not_threshold: Option<String>,
    pub rows: Vec<VirialRow>,
    pub rms_mismatch: f64,
    pub max_mismatch: f64,
    /// (16/(N−2))·max d(u)
    pub scale: f64,
    /// max |G_R|/(R²‖u‖²) over the samples
    pub g_bound_ratio: f64,
}

/// Compare centered differences of G_R(t) with the right-hand side of the
/// virial identity. The threshold form is used when `threshold` is set and
/// E(u₀) = E(W) within 1e−5 relative; otherwise the general form.
pub fn virial_identity_check(
    fields: &[(f64, ComplexField)],
    c: &Cutoff,
    gs: &GroundStateBundle,
    threshold: bool,
) -> Result<VirialReport> {
    if fields.len() < 3 {
        return Err(Error::InvalidArgument("need at least three time samples".into()));
    }
    let n = c.grid.dim as f64;
    let k = 16.0 / (n - 2.0);
    let mut not_threshold = None;
    let form = if threshold {
        let e0 = energy(&fields[0].1);
        let rel = (e0 - gs.energy_w).abs() / gs.energy_w.abs();
        if rel <= 1e-5 {
            IdentityForm::Threshold
        } else {
            not_threshold = Some(Error::NotThreshold(rel).to_string());
            IdentityForm::General
        }
    } else {
        IdentityForm::General
    };
    let mut g = Vec::with_capacity(fields.len());
    let mut rhs = Vec::with_capacity(fields.len());
    let mut ar = Vec::with_capacity(fields.len());
    let mut max_dee: f64 = 0.0;
    let mut g_bound_ratio: f64 = 0.0;
    for (_, u) in fields {
        let gr = g_r(u, c)?;
        let a = a_r(u, c)?;
        let h1 = h1_norm_sq(u);
        let dee = h1 - gs.h1_w;
        max_dee = max_dee.max(dee.abs());
        let r = match form {
            IdentityForm::Threshold => -k * dee + a,
            IdentityForm::General => 8.0 * (h1 - crit_integral(u)) + a,
        };
        if h1 > 0.0 {
            g_bound_ratio = g_bound_ratio.max(gr.abs() / (c.r_scale * c.r_scale * h1));
        }
        g.push(gr);
        rhs.push(r);
        ar.push(a);
    }
    let mut rows = Vec::new();
    for i in 1..fields.len() - 1 {
        let (t0, t1, t2) = (fields[i - 1].0, fields[i].0, fields[i + 1].0);
        let (h0, h1) = (t1 - t0, t2 - t1);
        // three-point derivative on a possibly non-uniform stencil
        let d = -h1 / (h0 * (h0 + h1)) * g[i - 1] + (h1 - h0) / (h0 * h1) * g[i] + h0 / (h1 * (h0 + h1)) * g[i + 1];
        rows.push(VirialRow { t: t1, g_r: g[i], dgdt_fd: d, rhs_identity: rhs[i], a_r: ar[i], mismatch: d - rhs[i] });
    }
    let rms = (rows.iter().map(|r| r.mismatch * r.mismatch).sum::<f64>() / rows.len() as f64).sqrt();
    let max = rows.iter().map(|r| r.mismatch.abs()).fold(0.0, f64::max);
    Ok(VirialReport { form, not_threshold, rows, rms_mismatch: rms, max_mismatch: max, scale: k * max_dee, g_bound_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blends_match_end_conditions() {
        for kind in [CutoffKind::Sec3, CutoffKind::Sec4, CutoffKind::Mass] {
            let p = Profile::new(kind);
            let a = p.eval(1.0 + 1e-12);
            let b = p.eval(1.0 - 1e-12);
            for d in 0..4 {
                assert!((a[d] - b[d]).abs() < 1e-8, "{kind:?} d={d} {a:?} {b:?}");
            }
            let e = p.eval(p.end - 1e-9);
            // φ⁗ is O(10³) at the end point, so φ‴ is only ~1e-6 there
            assert!(e[..3].iter().all(|v| v.abs() < 1e-9) && e[3].abs() < 1e-5, "{kind:?} {e:?}");
        }
    }

    #[test]
    fn sec4_satisfies_sign_constraints() {
        let p = Profile::new(CutoffKind::Sec4);
        for i in 0..=60000 {
            let r = 1.0 + 6.0 * i as f64 / 60000.0;
            let [f, _, f2, _, _] = p.eval(r);
            assert!(f >= -1e-14 && f2 <= 2.0 + 1e-12, "r={r} φ={f} φ″={f2}");
        }
    }
}
