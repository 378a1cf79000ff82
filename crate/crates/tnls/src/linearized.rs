//! Linearisation 𝓛 at W, the forms B and Q, the eigenpair (e₀, 𝒴₊),
//! resolvent solves and the coercivity probe on G⊥.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::banded::{BandMatrix, BandedLu};
use crate::error::{Error, Result};
use crate::grid::{h1_norm_sq, make_grid, ComplexField, OuterBc, RadialGrid, SymTri};
use crate::ground_state::{w1_exact, w1_prime_exact, w_exact, GroundStateBundle};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Coarse grid used to seed the shift of the inverse iteration.
const COARSE_M: usize = 400;
const MAX_EIGEN_IT: usize = 300;

#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub grid: Arc<RadialGrid>,
    pub bc: OuterBc,
    /// V = W^{p_c − 1}
    pub potential: Vec<f64>,
    /// Δ + V = diag(m)^{-1} t_minus
    pub t_minus: SymTri,
    /// Δ + p_c V = diag(m)^{-1} t_plus
    pub t_plus: SymTri,
}

impl LinearizedOperator {
    pub fn new(grid: &Arc<RadialGrid>, bc: OuterBc) -> Self {
        let dim = grid.dim;
        let pc = grid.p_c();
        let potential: Vec<f64> = grid.nodes.iter().map(|&r| w_exact(dim, r).powf(pc - 1.0)).collect();
        // Each operator gets the Robin coefficient of its own decaying kernel
        // element: W for Δ+V, W₁ for Δ+p_cV.
        let (bc_minus, bc_plus) = match bc {
            OuterBc::GroundStateRobin => {
                let r = grid.r_max;
                let k1 = grid.sphere() * r.powi(dim as i32 - 1) * (-w1_prime_exact(dim, r) / w1_exact(dim, r));
                (bc, OuterBc::Robin(k1))
            }
            other => (other, other),
        };
        let mv: Vec<f64> = potential.iter().zip(grid.volumes()).map(|(v, m)| v * m).collect();
        let pmv: Vec<f64> = mv.iter().map(|x| pc * x).collect();
        LinearizedOperator {
            grid: grid.clone(),
            bc,
            t_minus: grid.laplacian_tri(bc_minus).add_diag(&mv),
            t_plus: grid.laplacian_tri(bc_plus).add_diag(&pmv),
            potential,
        }
    }

    pub fn m(&self) -> usize {
        self.grid.m
    }

    fn unmass<T: Copy + std::ops::Mul<f64, Output = T>>(&self, x: Vec<T>) -> Vec<T> {
        x.into_iter().zip(self.grid.volumes()).map(|(v, &m)| v * (1.0 / m)).collect()
    }

    /// (Δ + V) x
    pub fn a_minus(&self, x: &[f64]) -> Vec<f64> {
        self.unmass(self.t_minus.apply(x))
    }

    /// (Δ + p_c V) x
    pub fn a_plus(&self, x: &[f64]) -> Vec<f64> {
        self.unmass(self.t_plus.apply(x))
    }

    pub fn apply_l_raw(&self, f: &[Complex64]) -> Vec<Complex64> {
        let f1: Vec<f64> = f.iter().map(|z| z.re).collect();
        let f2: Vec<f64> = f.iter().map(|z| z.im).collect();
        let a = self.a_minus(&f2);
        let b = self.a_plus(&f1);
        a.iter().zip(&b).map(|(&x, &y)| Complex64::new(x, -y)).collect()
    }

    pub fn apply_l(&self, f: &ComplexField) -> Result<ComplexField> {
        self.check(f)?;
        Ok(ComplexField { grid: self.grid.clone(), values: self.apply_l_raw(&f.values) })
    }

    fn check(&self, f: &ComplexField) -> Result<()> {
        if self.grid.same_as(&f.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// ∫ V (p_c f₁g₁ + f₂g₂)
    fn potential_pairing(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        let pc = self.grid.p_c();
        let v: Vec<f64> = self
            .potential
            .iter()
            .zip(f.iter().zip(g))
            .map(|(v, (a, b))| v * (pc * a.re * b.re + a.im * b.im))
            .collect();
        self.grid.integrate_with_tail(&v)
    }

    /// B(f,g) = ½∫∇f·∇g − ½∫V(p_c f₁g₁ + f₂g₂), from the explicit integrals.
    pub fn bilinear_b(&self, f: &ComplexField, g: &ComplexField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.bilinear_b_raw(&f.values, &g.values))
    }

    pub fn bilinear_b_raw(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        0.5 * self.grid.h1_inner_raw(f, g) - 0.5 * self.potential_pairing(f, g)
    }

    pub fn quadratic_q(&self, f: &ComplexField) -> Result<f64> {
        self.bilinear_b(f, f)
    }

    /// 𝓛 − c on interleaved unknowns (f₁₀, f₂₀, f₁₁, f₂₁, …).
    fn block_matrix(&self, c: f64) -> BandMatrix<f64> {
        let m = self.m();
        let vol = self.grid.volumes();
        let mut b = BandMatrix::zeros(2 * m, 3, 3);
        for i in 0..m {
            let inv = 1.0 / vol[i];
            b.set(2 * i, 2 * i, -c);
            b.set(2 * i + 1, 2 * i + 1, -c);
            // real row: (Δ+V) f₂ ; imaginary row: −(Δ+p_cV) f₁
            b.set(2 * i, 2 * i + 1, self.t_minus.diag[i] * inv);
            b.set(2 * i + 1, 2 * i, -self.t_plus.diag[i] * inv);
            if i + 1 < m {
                b.set(2 * i, 2 * i + 3, self.t_minus.off[i] * inv);
                b.set(2 * i + 1, 2 * i + 2, -self.t_plus.off[i] * inv);
            }
            if i > 0 {
                b.set(2 * i, 2 * i - 1, self.t_minus.off[i - 1] * inv);
                b.set(2 * i + 1, 2 * i - 2, -self.t_plus.off[i - 1] * inv);
            }
        }
        b
    }

    /// M = (Δ+V)(Δ+p_cV) as a pentadiagonal matrix, minus σ.
    fn fourth_order_matrix(&self, sigma: f64) -> BandMatrix<f64> {
        let m = self.m();
        let vol = self.grid.volumes();
        let entry = |t: &SymTri, i: usize, j: usize| -> f64 {
            if i == j {
                t.diag[i] / vol[i]
            } else if j == i + 1 {
                t.off[i] / vol[i]
            } else if i == j + 1 {
                t.off[j] / vol[i]
            } else {
                0.0
            }
        };
        let mut b = BandMatrix::zeros(m, 2, 2);
        for i in 0..m {
            for j in i.saturating_sub(2)..=(i + 2).min(m - 1) {
                let mut acc = 0.0;
                for k in i.saturating_sub(1)..=(i + 1).min(m - 1) {
                    if k + 1 >= j && k <= j + 1 {
                        acc += entry(&self.t_minus, i, k) * entry(&self.t_plus, k, j);
                    }
                }
                if i == j {
                    acc -= sigma;
                }
                b.set(i, j, acc);
            }
        }
        b
    }

    fn apply_m(&self, y: &[f64]) -> Vec<f64> {
        self.a_minus(&self.a_plus(y))
    }
}

pub fn apply_l(op: &LinearizedOperator, f: &ComplexField) -> Result<ComplexField> {
    op.apply_l(f)
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub e0: f64,
    /// 𝒴₊ = 𝒴₁ + i𝒴₂, ‖𝒴₊‖_{Ḣ¹} = 1, (W,𝒴₁)_{Ḣ¹} > 0
    pub yplus: ComplexField,
    /// ‖𝓛𝒴₊ − e₀𝒴₊‖_{Ḣ¹}
    pub residual: f64,
    /// e₀ from the coarse dense route (operator P)
    pub e0_coarse: f64,
    /// e₀ from inverse iteration on M before the block polish
    pub e0_fourth_order: f64,
    pub iterations: usize,
}

impl EigenPair {
    pub fn y1(&self) -> Vec<f64> {
        self.yplus.re()
    }

    pub fn y2(&self) -> Vec<f64> {
        self.yplus.im()
    }

    pub fn yminus(&self) -> ComplexField {
        self.yplus.conj()
    }
}

/// Most negative eigenvalue of P = (−A₋)^{1/2}(−A₊)(−A₋)^{1/2} in the
/// cell-volume symmetrisation, by dense diagonalisation.
pub fn dense_p_min_eigenvalue(op: &LinearizedOperator) -> f64 {
    let m = op.m();
    let vol = op.grid.volumes();
    let sym = |t: &SymTri| {
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = -t.diag[i] / vol[i];
            if i + 1 < m {
                let v = -t.off[i] / (vol[i] * vol[i + 1]).sqrt();
                a[(i, i + 1)] = v;
                a[(i + 1, i)] = v;
            }
        }
        a
    };
    let am = SymmetricEigen::new(sym(&op.t_minus));
    let sq = am.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &am.eigenvectors * DMatrix::from_diagonal(&sq) * am.eigenvectors.transpose();
    let p = &root * sym(&op.t_plus) * &root;
    let p = (&p + p.transpose()) * 0.5;
    SymmetricEigen::new(p).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn eigenpair(op: &LinearizedOperator) -> Result<EigenPair> {
    let g = &op.grid;
    let coarse_op = if g.m > COARSE_M {
        LinearizedOperator::new(&make_grid(g.dim, g.r_max, COARSE_M, g.stretch)?, op.bc)
    } else {
        op.clone()
    };
    let lam_coarse = dense_p_min_eigenvalue(&coarse_op);
    if lam_coarse >= -1e-8 {
        return Err(Error::NoNegativeMode(lam_coarse));
    }
    let e0_coarse = (-lam_coarse).sqrt();

    // shift-inverted inverse iteration on M
    let sigma = lam_coarse * (1.0 + 1e-4);
    let lu = op.fourth_order_matrix(sigma).factor()?;
    let mut y: Vec<f64> = g.nodes.iter().map(|r| (-r).exp()).collect();
    // Rayleigh quotients of M carry rounding noise ~ ε‖M‖, so the run also
    // stops once the successive differences stop shrinking.
    let mut lam_prev = f64::NAN;
    let mut lam = f64::NAN;
    let mut diff_prev = f64::INFINITY;
    let mut stalls = 0;
    let mut iterations = 0;
    for it in 1..=MAX_EIGEN_IT {
        lu.solve_in_place(&mut y);
        let n = norm2(&y);
        y.iter_mut().for_each(|v| *v /= n);
        lam = dot(&y, &op.apply_m(&y));
        iterations = it;
        let diff = (lam - lam_prev).abs();
        if diff < 1e-12 * lam.abs() {
            break;
        }
        if it > 5 && diff > 0.5 * diff_prev {
            stalls += 1;
            if stalls >= 3 && diff < 1e-6 * lam.abs() {
                break;
            }
        }
        diff_prev = diff;
        lam_prev = lam;
    }
    if iterations == MAX_EIGEN_IT {
        return Err(Error::EigenNoConvergence(iterations));
    }
    if lam >= -1e-8 {
        return Err(Error::NoNegativeMode(lam));
    }
    let e0_fourth_order = (-lam).sqrt();
    let y2: Vec<f64> = op.a_plus(&y).iter().map(|v| -v / e0_fourth_order).collect();

    // polish on the block operator itself
    let m = op.m();
    let mut z = vec![0.0; 2 * m];
    for i in 0..m {
        z[2 * i] = y[i];
        z[2 * i + 1] = y2[i];
    }
    let mut e0 = e0_fourth_order;
    for _ in 0..3 {
        let lu = op.block_matrix(e0 * (1.0 + 1e-9)).factor()?;
        lu.solve_in_place(&mut z);
        let n = norm2(&z);
        z.iter_mut().for_each(|v| *v /= n);
        let lz = op.block_matrix(0.0).matvec(&z);
        e0 = dot(&z, &lz) / dot(&z, &z);
    }
    let mut yp: Vec<Complex64> = (0..m).map(|i| Complex64::new(z[2 * i], z[2 * i + 1])).collect();
    let nrm = g.h1_inner_raw(&yp, &yp).sqrt();
    let w: Vec<Complex64> = g.nodes.iter().map(|&r| Complex64::new(w_exact(g.dim, r), 0.0)).collect();
    let sign = if g.h1_inner_raw(&w, &yp) < 0.0 { -1.0 } else { 1.0 };
    yp.iter_mut().for_each(|v| *v *= sign / nrm);
    let res: Vec<Complex64> = op.apply_l_raw(&yp).iter().zip(&yp).map(|(l, y)| l - y * e0).collect();
    let residual = g.h1_inner_raw(&res, &res).sqrt();
    Ok(EigenPair {
        e0,
        yplus: ComplexField { grid: g.clone(), values: yp },
        residual,
        e0_coarse,
        e0_fourth_order,
        iterations,
    })
}

/// Ḣ¹ residuals of (Δ+p_cV)𝒴₁ = −e₀𝒴₂ and (Δ+V)𝒴₂ = e₀𝒴₁.
pub fn eigen_equation_residuals(op: &LinearizedOperator, pair: &EigenPair) -> (f64, f64) {
    let y1 = pair.y1();
    let y2 = pair.y2();
    let r1: Vec<Complex64> =
        op.a_plus(&y1).iter().zip(&y2).map(|(a, b)| Complex64::new(a + pair.e0 * b, 0.0)).collect();
    let r2: Vec<Complex64> =
        op.a_minus(&y2).iter().zip(&y1).map(|(a, b)| Complex64::new(a - pair.e0 * b, 0.0)).collect();
    let g = &op.grid;
    (g.h1_inner_raw(&r1, &r1).sqrt(), g.h1_inner_raw(&r2, &r2).sqrt())
}

/// Deflated inverse iteration on M at the given shifts; returns the Rayleigh
/// quotient reached for each shift (a second negative mode would show up here).
pub fn spectral_gap_probe(op: &LinearizedOperator, pair: &EigenPair, shifts: &[f64]) -> Result<Vec<f64>> {
    let y1 = pair.y1();
    let y2 = pair.y2();
    let vol = op.grid.volumes();
    let left: Vec<f64> = y2.iter().zip(vol).map(|(a, m)| a * m).collect();
    let denom = dot(&left, &y1);
    let deflate = |y: &mut Vec<f64>| {
        let c = dot(&left, y) / denom;
        y.iter_mut().zip(&y1).for_each(|(v, a)| *v -= c * a);
    };
    let mut out = Vec::new();
    for &s in shifts {
        let lu = op.fourth_order_matrix(s).factor()?;
        let mut y: Vec<f64> = op.grid.nodes.iter().map(|r| (-0.3 * r).exp() * (1.0 + r.cos())).collect();
        deflate(&mut y);
        let mut lam = 0.0;
        for _ in 0..100 {
            lu.solve_in_place(&mut y);
            deflate(&mut y);
            let n = norm2(&y);
            y.iter_mut().for_each(|v| *v /= n);
            lam = dot(&y, &op.apply_m(&y));
        }
        out.push(lam);
    }
    Ok(out)
}

/// Factorised 𝓛 − c, reusable for several right-hand sides.
pub struct Resolvent {
    op_grid: Arc<RadialGrid>,
    c: f64,
    lu: BandedLu<f64>,
    matrix: BandMatrix<f64>,
}

impl Resolvent {
    pub fn new(op: &LinearizedOperator, c: f64, e0: f64) -> Result<Self> {
        let margin = 1e-6 * e0;
        if [-e0, 0.0, e0].iter().any(|s| (c - s).abs() < margin) {
            return Err(Error::SpectralCollision { shift: c });
        }
        let matrix = op.block_matrix(c);
        let lu = matrix.clone().factor()?;
        Ok(Resolvent { op_grid: op.grid.clone(), c, lu, matrix })
    }

    pub fn shift(&self) -> f64 {
        self.c
    }

    /// Φ with (𝓛 − c)Φ = Ψ; one step of iterative refinement.
    pub fn solve(&self, psi: &ComplexField) -> Result<ComplexField> {
        let g = &self.op_grid;
        if !g.same_as(&psi.grid) {
            return Err(Error::GridMismatch);
        }
        let m = g.m;
        let mut b = vec![0.0; 2 * m];
        for (i, z) in psi.values.iter().enumerate() {
            b[2 * i] = z.re;
            b[2 * i + 1] = z.im;
        }
        let mut x = self.lu.solve(&b);
        let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(&b).map(|(a, b)| b - a).collect();
        let dx = self.lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let vol = g.volumes();
        let wn = |v: &[f64]| (0..m).map(|i| vol[i] * (v[2 * i].powi(2) + v[2 * i + 1].powi(2))).sum::<f64>().sqrt();
        let (rn, bn) = (wn(&r), wn(&b));
        if bn > 0.0 && rn > 1e-8 * bn {
            return Err(Error::SingularSolve(0));
        }
        let values = (0..m).map(|i| Complex64::new(x[2 * i], x[2 * i + 1])).collect();
        Ok(ComplexField { grid: g.clone(), values })
    }
}

pub fn resolvent_solve(op: &LinearizedOperator, c: f64, psi: &ComplexField, e0: f64) -> Result<ComplexField> {
    Resolvent::new(op, c, e0)?.solve(psi)
}

/// Projection onto G⊥ = {(iW,v) = (W₁,v) = B(𝒴₊,v) = B(𝒴₋,v) = 0}.
pub struct GperpProjector {
    dirs: [Vec<Complex64>; 4],
    op: LinearizedOperator,
    gram_inv: Matrix4<f64>,
    pub b_yp_ym: f64,
}

impl GperpProjector {
    pub fn new(op: &LinearizedOperator, pair: &EigenPair) -> Result<Self> {
        let g = &op.grid;
        let iw: Vec<Complex64> = g.nodes.iter().map(|&r| I * w_exact(g.dim, r)).collect();
        let w1: Vec<Complex64> = g.nodes.iter().map(|&r| Complex64::new(w1_exact(g.dim, r), 0.0)).collect();
        let yp = pair.yplus.values.clone();
        let ym: Vec<Complex64> = yp.iter().map(|z| z.conj()).collect();
        let b_yp_ym = op.bilinear_b_raw(&yp, &ym);
        if b_yp_ym.abs() < 1e-8 {
            return Err(Error::DegenerateProjection(b_yp_ym));
        }
        let dirs = [iw, w1, yp, ym];
        let mut gram = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                gram[(i, j)] = Self::functional(op, &dirs, i, &dirs[j]);
            }
        }
        let gram_inv = gram.try_inverse().ok_or(Error::DegenerateProjection(b_yp_ym))?;
        Ok(GperpProjector { dirs, op: op.clone(), gram_inv, b_yp_ym })
    }

    fn functional(op: &LinearizedOperator, dirs: &[Vec<Complex64>; 4], i: usize, f: &[Complex64]) -> f64 {
        match i {
            0 | 1 => op.grid.h1_inner_raw(&dirs[i], f),
            _ => op.bilinear_b_raw(&dirs[i], f),
        }
    }

    pub fn constraints(&self, f: &ComplexField) -> [f64; 4] {
        let mut c = [0.0; 4];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = Self::functional(&self.op, &self.dirs, i, &f.values);
        }
        c
    }

    pub fn project(&self, f: &ComplexField) -> ComplexField {
        let l = Vector4::from(self.constraints(f));
        let c = self.gram_inv * l;
        let mut v = f.values.clone();
        for (k, d) in self.dirs.iter().enumerate() {
            v.iter_mut().zip(d).for_each(|(a, b)| *a -= b * c[k]);
        }
        ComplexField { grid: f.grid.clone(), values: v }
    }
}

pub fn project_gperp(op: &LinearizedOperator, pair: &EigenPair, f: &ComplexField) -> Result<ComplexField> {
    Ok(GperpProjector::new(op, pair)?.project(f))
}

/// Smooth random field: Gaussian-coefficient combination of Gaussian bumps
/// with widths 0.25·2^{j/2}, j = 0..12.
pub fn random_smooth_field(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> ComplexField {
    let widths: Vec<f64> = (0..12).map(|j| 0.25 * 2f64.powf(j as f64 / 2.0)).collect();
    let coef: Vec<Complex64> = widths
        .iter()
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a, b)
        })
        .collect();
    ComplexField::from_fn(grid, |r| {
        widths.iter().zip(&coef).map(|(s, c)| c * (-(r / s).powi(2)).exp()).sum()
    })
}

/// Minimum of Q(f)/‖f‖²_{Ḣ¹} over `trials` random smooth fields projected onto G⊥.
pub fn coercivity_probe(op: &LinearizedOperator, pair: &EigenPair, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let proj = GperpProjector::new(op, pair)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..trials {
        let f = proj.project(&random_smooth_field(&op.grid, &mut rng));
        let q = op.bilinear_b_raw(&f.values, &f.values) / h1_norm_sq(&f);
        best = best.min(q);
    }
    Ok(best)
}

/// Q(W)/‖W‖², Q(iW)/‖W‖², Q(W₁)/‖W‖²
pub fn q_values(op: &LinearizedOperator, gs: &GroundStateBundle) -> (f64, f64, f64) {
    let h = gs.h1_w;
    let q = |f: &ComplexField| op.bilinear_b_raw(&f.values, &f.values) / h;
    (q(&gs.w_complex()), q(&gs.iw()), q(&gs.w1_complex()))
}
