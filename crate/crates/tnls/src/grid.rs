//! Radial grids on ℝ^N, quadrature, finite-volume Laplacian, high-order
//! gradients, Ḣ¹ products and the phase/scaling group action.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the first-derivative stencils (9 points, 8th order).
const HALF: usize = 4;

pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        _ => f64::NAN,
    }
}

/// Node map ξ ↦ r and its Jacobian; clusters nodes at the origin for stretch > 0.
#[inline]
fn map(xi: f64, r_max: f64, s: f64) -> (f64, f64) {
    let den = 1.0 + s * (1.0 - xi);
    (r_max * xi / den, r_max * (1.0 + s) / (den * den))
}

#[derive(Clone, Debug)]
struct Stencil {
    idx: [usize; 2 * HALF + 1],
    w: [f64; 2 * HALF + 1],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OuterBc {
    /// Last node decoupled and held at zero.
    Dirichlet,
    Neumann,
    /// Robin condition matched to the r^{2-N} tail of W.
    #[default]
    GroundStateRobin,
    Robin(f64),
}

#[derive(Clone, Debug)]
pub struct RadialGrid {
    pub dim: usize,
    pub r_max: f64,
    pub m: usize,
    pub stretch: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    jac: Vec<f64>,
    // finite volume data: face conductances (len m-1) and cell volumes
    cond: Vec<f64>,
    volumes: Vec<f64>,
    stencils: Vec<Stencil>,
}

pub fn make_grid(dim: usize, r_max: f64, m: usize, stretch: f64) -> Result<Arc<RadialGrid>> {
    if !(3..=5).contains(&dim) {
        return Err(Error::InvalidGrid(format!("dimension {dim} not in {{3,4,5}}")));
    }
    if m < 16 {
        return Err(Error::InvalidGrid(format!("M = {m} < 16")));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("r_max = {r_max} must be positive")));
    }
    if !(stretch >= 0.0 && stretch.is_finite()) {
        return Err(Error::InvalidGrid(format!("stretch = {stretch} must be nonnegative")));
    }
    Ok(Arc::new(RadialGrid::build(dim, r_max, m, stretch)))
}

impl RadialGrid {
    fn build(dim: usize, r_max: f64, m: usize, stretch: f64) -> Self {
        let s_area = sphere_area(dim);
        let h = 1.0 / m as f64;
        let (nodes, jac): (Vec<f64>, Vec<f64>) =
            (1..=m).map(|i| map(i as f64 * h, r_max, stretch)).unzip();

        // composite Simpson in ξ over j = 0..m (the ξ = 0 node carries r^{N-1} = 0);
        // odd m: 3/8 rule on the first three intervals
        let mut c = vec![0.0; m + 1];
        let start = if m % 2 == 1 {
            for (j, v) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                c[j] += 3.0 * h / 8.0 * v;
            }
            3
        } else {
            0
        };
        for j in (start..m).step_by(2) {
            c[j] += h / 3.0;
            c[j + 1] += 4.0 * h / 3.0;
            c[j + 2] += h / 3.0;
        }
        let weights: Vec<f64> = (0..m)
            .map(|i| c[i + 1] * nodes[i].powi(dim as i32 - 1) * jac[i] * s_area)
            .collect();

        let mut cond = Vec::with_capacity(m - 1);
        let mut edges = vec![0.0];
        for i in 1..m {
            let (rf, drf) = map((i as f64 + 0.5) * h, r_max, stretch);
            cond.push(s_area * rf.powi(dim as i32 - 1) / (drf * h));
            edges.push(rf);
        }
        edges.push(r_max);
        let volumes = edges
            .windows(2)
            .map(|e| s_area * (e[1].powi(dim as i32) - e[0].powi(dim as i32)) / dim as f64)
            .collect();

        let stencils = (0..m).map(|i| derivative_stencil(&nodes, i)).collect();
        RadialGrid { dim, r_max, m, stretch, nodes, weights, jac, cond, volumes, stencils }
    }

    /// Node map ξ ∈ [0,1] ↦ (r, dr/dξ).
    pub fn r_of_xi(&self, xi: f64) -> (f64, f64) {
        map(xi, self.r_max, self.stretch)
    }

    pub fn sphere(&self) -> f64 {
        sphere_area(self.dim)
    }

    pub fn p_c(&self) -> f64 {
        (self.dim as f64 + 2.0) / (self.dim as f64 - 2.0)
    }

    pub fn two_star(&self) -> f64 {
        2.0 * self.dim as f64 / (self.dim as f64 - 2.0)
    }

    /// |u|^{p_c-1} from |u|².
    #[inline]
    pub fn nl_power(&self, a2: f64) -> f64 {
        match self.dim {
            3 => a2 * a2,
            4 => a2,
            _ => (a2 * a2).cbrt(),
        }
    }

    /// |u|^{2*} from |u|².
    #[inline]
    pub fn crit_power(&self, a2: f64) -> f64 {
        match self.dim {
            3 => a2 * a2 * a2,
            4 => a2 * a2,
            _ => a2 * (a2 * a2).cbrt(),
        }
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.m == other.m
                && self.r_max == other.r_max
                && self.stretch == other.stretch)
    }

    /// Cell volumes of the finite-volume discretisation (the mass matrix).
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn jacobian(&self) -> &[f64] {
        &self.jac
    }

    pub fn conductances(&self) -> &[f64] {
        &self.cond
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Quadrature plus a power-law estimate of ∫_{r_max}^∞, fitted on the last
    /// two nodes and used only when the fitted decay makes the tail integrable.
    pub fn integrate_with_tail(&self, f: &[f64]) -> f64 {
        self.integrate(f) + self.power_tail(f)
    }

    fn power_tail(&self, f: &[f64]) -> f64 {
        let m = self.m;
        let (r1, r2) = (self.nodes[m - 2], self.nodes[m - 1]);
        let (f1, f2) = (f[m - 2], f[m - 1]);
        if f1 == 0.0 || f2 == 0.0 || f1.signum() != f2.signum() {
            return 0.0;
        }
        let q = -(f2 / f1).ln() / (r2 / r1).ln();
        let n = self.dim as f64;
        if q > n + 0.5 {
            self.sphere() * f2 * r2.powf(n) / (q - n)
        } else {
            0.0
        }
    }

    pub fn derivative_real(&self, f: &[f64]) -> Vec<f64> {
        self.stencils
            .iter()
            .map(|s| s.idx.iter().zip(&s.w).map(|(&j, w)| w * f[j]).sum())
            .collect()
    }

    pub fn derivative(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.stencils
            .iter()
            .map(|s| s.idx.iter().zip(&s.w).map(|(&j, &w)| f[j] * w).sum())
            .collect()
    }

    /// Coefficients (c1, c2) of c1 r^{2-N} + c2 r^{-N} through the last two nodes.
    pub fn tail_fit(&self, f: &[Complex64]) -> (Complex64, Complex64) {
        let m = self.m;
        let n = self.dim as i32;
        let (r1, r2) = (self.nodes[m - 2], self.nodes[m - 1]);
        let (a, b, c, d) = (r1.powi(2 - n), r1.powi(-n), r2.powi(2 - n), r2.powi(-n));
        let det = a * d - b * c;
        let (f1, f2) = (f[m - 2], f[m - 1]);
        ((f1 * d - f2 * b) / det, (f2 * a - f1 * c) / det)
    }

    /// Exterior contribution Re ∫_{|x|>r_max} ∇f·∇ḡ of the fitted tails.
    pub fn h1_tail(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        let n = self.dim as f64;
        let r = self.r_max;
        let (a1, a2) = self.tail_fit(f);
        let (b1, b2) = self.tail_fit(g);
        let fa = [(a1 * (2.0 - n), 1.0 - n), (a2 * (-n), -n - 1.0)];
        let gb = [(b1 * (2.0 - n), 1.0 - n), (b2 * (-n), -n - 1.0)];
        let mut t = 0.0;
        for (cf, ef) in fa {
            for (cg, eg) in gb {
                let q = ef + eg + n - 1.0;
                t += (cf * cg.conj()).re * (-r.powf(q + 1.0) / (q + 1.0));
            }
        }
        self.sphere() * t
    }

    pub fn h1_inner_raw(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        let df = self.derivative(f);
        let dg = self.derivative(g);
        let bulk: f64 =
            self.weights.iter().zip(df.iter().zip(&dg)).map(|(w, (a, b))| w * (a * b.conj()).re).sum();
        bulk + self.h1_tail(f, g)
    }

    /// Robin coefficient of the outer condition; None for Dirichlet.
    pub fn robin_kappa(&self, bc: OuterBc) -> Option<f64> {
        let r = self.r_max;
        let n = self.dim as f64;
        match bc {
            OuterBc::Dirichlet => None,
            OuterBc::Neumann => Some(0.0),
            OuterBc::Robin(k) => Some(k),
            OuterBc::GroundStateRobin => {
                let logder = (r / n) / (1.0 + r * r / (n * (n - 2.0)));
                Some(self.sphere() * r.powf(n - 1.0) * logder)
            }
        }
    }

    /// Symmetric tridiagonal T with Δ ≈ diag(volumes)^{-1} T.
    pub fn laplacian_tri(&self, bc: OuterBc) -> SymTri {
        let m = self.m;
        let mut diag = vec![0.0; m];
        let mut off = self.cond.clone();
        for (i, &k) in self.cond.iter().enumerate() {
            diag[i] -= k;
            diag[i + 1] -= k;
        }
        match self.robin_kappa(bc) {
            Some(kappa) => diag[m - 1] -= kappa,
            None => off[m - 2] = 0.0,
        }
        SymTri { diag, off }
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct SymTri {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTri {
    pub fn apply<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.diag.len();
        let mut y: Vec<T> = x.iter().zip(&self.diag).map(|(&v, &d)| v * d).collect();
        for i in 0..n - 1 {
            y[i] = y[i] + x[i + 1] * self.off[i];
            y[i + 1] = y[i + 1] + x[i] * self.off[i];
        }
        y
    }

    pub fn add_diag(&self, d: &[f64]) -> SymTri {
        SymTri { diag: self.diag.iter().zip(d).map(|(a, b)| a + b).collect(), off: self.off.clone() }
    }
}

/// Fornberg's recursion for first-derivative weights at z on points x.
fn fornberg_d1(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|v| v[1]).collect()
}

/// Centred stencil; points left of the origin are mirrors (−r_j carries f_j),
/// the window shifts inward at the outer end.
fn derivative_stencil(r: &[f64], i: usize) -> Stencil {
    let m = r.len() as i64;
    let h = HALF as i64;
    let mut lo = i as i64 - h;
    let mut hi = i as i64 + h;
    if hi > m - 1 {
        lo -= hi - (m - 1);
        hi = m - 1;
    }
    let mut idx = [0usize; 2 * HALF + 1];
    let mut pts = [0.0; 2 * HALF + 1];
    for (k, j) in (lo..=hi).enumerate() {
        if j >= 0 {
            idx[k] = j as usize;
            pts[k] = r[j as usize];
        } else {
            let src = (-j - 1) as usize;
            idx[k] = src;
            pts[k] = -r[src];
        }
    }
    let wv = fornberg_d1(r[i], &pts);
    let mut w = [0.0; 2 * HALF + 1];
    w.copy_from_slice(&wv);
    Stencil { idx, w }
}

#[derive(Clone, Debug)]
pub struct RealField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ComplexField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: &Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.m {
            return Err(Error::InvalidArgument(format!("{} samples for M = {}", values.len(), grid.m)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(RealField { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        RealField { grid: grid.clone(), values: grid.nodes.iter().map(|&r| f(r)).collect() }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl ComplexField {
    pub fn new(grid: &Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.m {
            return Err(Error::InvalidArgument(format!("{} samples for M = {}", values.len(), grid.m)));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(ComplexField { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        ComplexField { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.m] }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        ComplexField { grid: grid.clone(), values: grid.nodes.iter().map(|&r| f(r)).collect() }
    }

    pub fn from_parts(grid: &Arc<RadialGrid>, re: &[f64], im: &[f64]) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ComplexField { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        ComplexField { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn conj(&self) -> Self {
        ComplexField { grid: self.grid.clone(), values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// self + c·other
    pub fn axpy(&self, c: Complex64, other: &ComplexField) -> Self {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        }
    }

    pub fn add(&self, other: &ComplexField) -> Self {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &ComplexField) -> Self {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    fn check(&self, other: &ComplexField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn integrate(f: &RealField) -> f64 {
    f.grid.integrate(&f.values)
}

/// Δf with f'(0) = 0 and the given outer condition (Dirichlet zeroes the last node).
pub fn radial_laplacian(f: &ComplexField, bc: OuterBc) -> ComplexField {
    let g = &f.grid;
    let t = g.laplacian_tri(bc);
    let mut out: Vec<Complex64> = t.apply(&f.values).iter().zip(g.volumes()).map(|(v, m)| v / m).collect();
    if bc == OuterBc::Dirichlet {
        out[g.m - 1] = Complex64::new(0.0, 0.0);
    }
    ComplexField { grid: g.clone(), values: out }
}

pub fn h1_inner(f: &ComplexField, g: &ComplexField) -> Result<f64> {
    f.check(g)?;
    Ok(f.grid.h1_inner_raw(&f.values, &g.values))
}

pub fn h1_norm_sq(f: &ComplexField) -> f64 {
    f.grid.h1_inner_raw(&f.values, &f.values)
}

/// Piecewise cubic Hermite sampler of a grid field: stencil slopes, Fritsch–Carlson
/// limiting per interval, even reflection through the origin and the fitted
/// c1 r^{2-N} + c2 r^{-N} tail beyond r_max.
pub struct Interpolant<'a> {
    grid: &'a RadialGrid,
    f: &'a [Complex64],
    d: Vec<Complex64>,
    tail: (Complex64, Complex64),
}

impl<'a> Interpolant<'a> {
    pub fn new(grid: &'a RadialGrid, f: &'a [Complex64]) -> Self {
        Interpolant { grid, f, d: grid.derivative(f), tail: grid.tail_fit(f) }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let r = &self.grid.nodes;
        let m = r.len();
        let n = self.grid.dim as i32;
        if x >= r[m - 1] {
            return self.tail.0 * x.powi(2 - n) + self.tail.1 * x.powi(-n);
        }
        let x = x.abs();
        if x <= r[0] {
            // even quadratic through the mirrored pair (−r1, r1)
            let r1 = r[0];
            return self.f[0] + self.d[0] * ((x * x - r1 * r1) / (2.0 * r1));
        }
        let i = r.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (r[i], r[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let re = hermite(t, h, self.f[i].re, self.f[i + 1].re, self.d[i].re, self.d[i + 1].re);
        let im = hermite(t, h, self.f[i].im, self.f[i + 1].im, self.d[i].im, self.d[i + 1].im);
        Complex64::new(re, im)
    }
}

fn hermite(t: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let delta = (y1 - y0) / h;
    let (mut d0, mut d1) = (d0, d1);
    if delta == 0.0 {
        d0 = 0.0;
        d1 = 0.0;
    } else {
        if d0 * delta < 0.0 {
            d0 = 0.0;
        }
        if d1 * delta < 0.0 {
            d1 = 0.0;
        }
        let (a, b) = (d0 / delta, d1 / delta);
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            d0 = tau * a * delta;
            d1 = tau * b * delta;
        }
    }
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// e^{iθ} μ^{-(N-2)/2} f(r/μ), resampled on the same grid.
pub fn rescale_phase(f: &ComplexField, theta: f64, mu: f64) -> Result<ComplexField> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale mu = {mu} must be positive")));
    }
    let g = &f.grid;
    if theta == 0.0 && mu == 1.0 {
        return Ok(f.clone());
    }
    let amp = Complex64::from_polar(mu.powf(-(g.dim as f64 - 2.0) / 2.0), theta);
    let it = Interpolant::new(g, &f.values);
    let values = g.nodes.iter().map(|&r| amp * it.eval(r / mu)).collect();
    Ok(ComplexField { grid: g.clone(), values })
}
