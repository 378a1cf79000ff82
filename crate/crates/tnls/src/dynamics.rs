//! Time integration of i∂ₜu + Δu + |u|^{p_c−1}u = 0 by the relaxation
//! Crank–Nicolson scheme, with conservation monitoring and endpoint detection.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::solve_sym_tridiagonal;
use crate::error::{Error, Result};
use crate::grid::{h1_norm_sq, ComplexField, OuterBc, RadialGrid, SymTri};
use crate::ground_state::{crit_integral, eval_w};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sponge {
    /// radius where absorption starts
    pub start: f64,
    pub strength: f64,
}

impl Sponge {
    /// Quadratic ramp on the outer 20% of the grid.
    pub fn outer_fifth(grid: &RadialGrid, strength: f64) -> Self {
        Sponge { start: 0.8 * grid.r_max, strength }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub sponge: Option<Sponge>,
    pub blowup_factor: f64,
    /// defaults to dt/2¹⁰
    pub dt_min: Option<f64>,
    pub observer_stride: usize,
    /// tolerance on the relative relaxation residual max|φ − |u^{n+½}|^{p−1}|
    pub relax_tol: f64,
    /// false: linear Schrödinger flow
    pub nonlinear: bool,
    pub bc: OuterBc,
    /// stop once the potential ratio has stayed below this over the last quarter of the run
    pub scatter_stop: Option<f64>,
    pub max_steps: usize,
    pub keep_fields: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt: 2e-3,
            t_end: 1.0,
            sponge: None,
            blowup_factor: 3.0,
            dt_min: None,
            observer_stride: 50,
            relax_tol: 1e-2,
            nonlinear: true,
            bc: OuterBc::GroundStateRobin,
            scatter_stop: None,
            max_steps: 20_000_000,
            keep_fields: false,
        }
    }
}

impl EvolutionConfig {
    pub fn dt_min(&self) -> f64 {
        self.dt_min.unwrap_or(self.dt / 1024.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.dt_min() > 0.0 && self.dt_min() < self.dt) {
            return bad("need 0 < dt_min < dt");
        }
        if !(self.blowup_factor > 1.0) {
            return bad("blowup_factor must exceed 1");
        }
        if self.observer_stride == 0 {
            return bad("observer_stride must be positive");
        }
        if !(self.t_end >= 0.0) {
            return bad("t_end must be non-negative");
        }
        Ok(())
    }
}

/// Discretized flow: T is the finite-volume Laplacian, Δ ≈ diag(m)⁻¹T.
#[derive(Clone, Debug)]
pub struct Flow {
    pub grid: Arc<RadialGrid>,
    tri: SymTri,
    kappa: f64,
    gamma: Vec<f64>,
    nonlinear: bool,
}

impl Flow {
    pub fn new(grid: &Arc<RadialGrid>, cfg: &EvolutionConfig) -> Self {
        let tri = grid.laplacian_tri(cfg.bc);
        let kappa = grid.robin_kappa(cfg.bc).unwrap_or(0.0);
        let gamma = match cfg.sponge {
            Some(s) => grid
                .nodes
                .iter()
                .map(|&r| {
                    let x = ((r - s.start) / (grid.r_max - s.start)).max(0.0);
                    s.strength * x * x
                })
                .collect(),
            None => vec![0.0; grid.m],
        };
        Flow { grid: grid.clone(), tri, kappa, gamma, nonlinear: cfg.nonlinear }
    }

    fn potential(&self, u: &[Complex64]) -> Vec<f64> {
        if self.nonlinear {
            u.iter().map(|z| self.grid.nl_power(z.norm_sqr())).collect()
        } else {
            vec![0.0; u.len()]
        }
    }

    /// Solve (i m/dt + ½(T + mφ + i mγ)) x = (i m/dt)u − ½(T + mφ + i mγ)u.
    fn cn_solve(&self, u: &[Complex64], phi: &[f64], dt: f64) -> Result<Vec<Complex64>> {
        let m = self.grid.volumes();
        let n = u.len();
        let tu = self.tri.apply(u);
        let mut diag = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for i in 0..n {
            let h = Complex64::new(m[i] * phi[i], m[i] * self.gamma[i]);
            let idt = I * (m[i] / dt);
            diag.push(idt + 0.5 * (self.tri.diag[i] + h));
            rhs.push(idt * u[i] - 0.5 * (tu[i] + h * u[i]));
        }
        let off: Vec<Complex64> = self.tri.off.iter().map(|&o| Complex64::new(0.5 * o, 0.0)).collect();
        let x = solve_sym_tridiagonal(&diag, &off, &rhs)?;
        // residual of the solve, relative to the right-hand side
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let mut ax = diag[i] * x[i];
            if i > 0 {
                ax += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                ax += off[i] * x[i + 1];
            }
            res = res.max((ax - rhs[i]).norm());
            scale = scale.max(rhs[i].norm());
        }
        let rel = res / scale.max(f64::MIN_POSITIVE);
        if !rel.is_finite() || rel > 1e-8 {
            return Err(Error::SolverDiverged(rel));
        }
        Ok(x)
    }

    /// Discrete kinetic term Σk|Δu|² + κ|u_M|² (= −⟨Tu,u⟩).
    pub fn discrete_kinetic(&self, u: &[Complex64]) -> f64 {
        let k = self.grid.conductances();
        let mut s: f64 = self.tri.off.iter().enumerate().map(|(i, &o)| o * (u[i + 1] - u[i]).norm_sqr()).sum();
        if self.tri.off.last() == Some(&0.0) && k.last() != Some(&0.0) {
            // Dirichlet: last node pinned
            let n = u.len();
            s += k[n - 2] * u[n - 2].norm_sqr();
        } else {
            s += self.kappa * u[u.len() - 1].norm_sqr();
        }
        s
    }

    pub fn discrete_energy(&self, u: &[Complex64]) -> f64 {
        let g = &self.grid;
        let pot: f64 = u.iter().zip(g.volumes()).map(|(z, m)| m * g.crit_power(z.norm_sqr())).sum();
        0.5 * self.discrete_kinetic(u) - pot / g.two_star()
    }

    pub fn discrete_mass(&self, u: &[Complex64]) -> f64 {
        u.iter().zip(self.grid.volumes()).map(|(z, m)| m * z.norm_sqr()).sum()
    }

    fn absorption_rate(&self, u: &[Complex64]) -> f64 {
        2.0 * u.iter().zip(self.grid.volumes()).zip(&self.gamma).map(|((z, m), g)| m * g * z.norm_sqr()).sum::<f64>()
    }
}

/// Stepper state: the field and the staggered auxiliary variable φ^{n−½}.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    flow: &'a Flow,
    pub u: Vec<Complex64>,
    phi: Option<Vec<f64>>,
    pub dt: f64,
    pub t: f64,
    /// relaxation residual of the last accepted step
    pub last_residual: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(flow: &'a Flow, u0: &[Complex64], dt: f64) -> Self {
        Stepper { flow, u: u0.to_vec(), phi: None, dt, t: 0.0, last_residual: 0.0 }
    }

    /// Startup: predictor with φ = |u⁰|^{p−1}, then φ = |(u⁰+u*)/2|^{p−1}.
    fn startup_phi(&self) -> Result<Vec<f64>> {
        let f = self.flow;
        let p0 = f.potential(&self.u);
        let ustar = f.cn_solve(&self.u, &p0, self.dt)?;
        let mid: Vec<Complex64> = self.u.iter().zip(&ustar).map(|(a, b)| 0.5 * (a + b)).collect();
        Ok(f.potential(&mid))
    }

    /// Attempt one step; returns (u^{n+1}, φ^{n+½} used, residual) without committing.
    fn trial(&self) -> Result<(Vec<Complex64>, Vec<f64>, f64)> {
        let phi = match &self.phi {
            Some(p) => p.clone(),
            None => self.startup_phi()?,
        };
        let un = self.flow.cn_solve(&self.u, &phi, self.dt)?;
        if un.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SolverDiverged(f64::INFINITY));
        }
        let mid: Vec<Complex64> = self.u.iter().zip(&un).map(|(a, b)| 0.5 * (a + b)).collect();
        let pm = self.flow.potential(&mid);
        let mut num: f64 = 0.0;
        let mut den: f64 = 1.0;
        for (a, b) in phi.iter().zip(&pm) {
            num = num.max((a - b).abs());
            den = den.max(*b);
        }
        Ok((un, phi, num / den))
    }

    fn commit(&mut self, un: Vec<Complex64>, phi: Vec<f64>, residual: f64) {
        let pn = self.flow.potential(&un);
        let next: Vec<f64> = pn.iter().zip(&phi).map(|(a, b)| 2.0 * a - b).collect();
        self.u = un;
        self.phi = Some(next);
        self.t += self.dt;
        self.last_residual = residual;
    }

    /// One step at fixed dt (no adaptivity).
    pub fn step(&mut self) -> Result<()> {
        let (un, phi, res) = self.trial()?;
        self.commit(un, phi, res);
        Ok(())
    }

    /// Change dt; the auxiliary variable is re-initialized by the startup step.
    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
        self.phi = None;
    }
}

/// One relaxation Crank–Nicolson step from u (including the startup predictor).
pub fn step(u: &ComplexField, dt: f64, cfg: &EvolutionConfig) -> Result<ComplexField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let flow = Flow::new(&u.grid, cfg);
    let mut st = Stepper::new(&flow, &u.values, dt);
    st.step()?;
    Ok(ComplexField { grid: u.grid.clone(), values: st.u })
}

/// Evolve with a fixed step count (no adaptivity), e.g. for convergence studies.
pub fn evolve_fixed(u0: &ComplexField, dt: f64, steps: usize, cfg: &EvolutionConfig) -> Result<ComplexField> {
    let flow = Flow::new(&u0.grid, cfg);
    let mut st = Stepper::new(&flow, &u0.values, dt);
    for _ in 0..steps {
        st.step()?;
    }
    Ok(ComplexField { grid: u0.grid.clone(), values: st.u })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sample {
    pub t: f64,
    /// discrete (scheme) energy
    pub energy: f64,
    pub mass: f64,
    /// mass absorbed by the sponge up to t
    pub absorbed: f64,
    /// ‖u‖²_{Ḣ¹}
    pub h1: f64,
    pub dee_signed: f64,
    pub potential_ratio: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Endpoint {
    Completed,
    Blowup { t_star: f64 },
    ScatterProxy { t: f64 },
    /// dt collapsed without gradient growth, or the step cap was hit
    Stalled { t: f64, reason: String },
    /// a step failed; the record is partial
    Failed { t: f64, error: String },
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub fields: Vec<(f64, ComplexField)>,
    pub endpoint: Endpoint,
    pub h1_w: f64,
    pub energy0: f64,
    pub mass0: f64,
    /// max |E(t) − E(0)| over the samples
    pub energy_drift: f64,
    pub final_field: ComplexField,
    pub steps: usize,
    pub dt_final: f64,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn relative_energy_drift(&self) -> f64 {
        self.energy_drift / self.energy0.abs().max(f64::MIN_POSITIVE)
    }

    pub fn sup_h1(&self) -> f64 {
        self.samples.iter().map(|s| s.h1).fold(0.0, f64::max)
    }

    pub fn inf_h1(&self) -> f64 {
        self.samples.iter().map(|s| s.h1).fold(f64::INFINITY, f64::min)
    }

    pub fn max_relative_mass_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| ((s.mass + s.absorbed - self.mass0) / self.mass0).abs())
            .fold(0.0, f64::max)
    }

    /// Whether dee_signed changes sign among samples with |dee| > floor.
    pub fn dee_sign_flips(&self, floor: f64) -> bool {
        let mut sign = 0.0;
        for s in &self.samples {
            if s.dee_signed.abs() > floor {
                let sg = s.dee_signed.signum();
                if sign != 0.0 && sg != sign {
                    return true;
                }
                sign = sg;
            }
        }
        false
    }
}

fn observe(flow: &Flow, u: &[Complex64], t: f64, dt: f64, absorbed: f64, h1_w: f64) -> Sample {
    let f = ComplexField { grid: flow.grid.clone(), values: u.to_vec() };
    let h1 = h1_norm_sq(&f);
    let crit = crit_integral(&f);
    Sample {
        t,
        energy: flow.discrete_energy(u),
        mass: flow.discrete_mass(u),
        absorbed,
        h1,
        dee_signed: h1 - h1_w,
        potential_ratio: if h1 > 0.0 { crit / h1 } else { 0.0 },
        dt,
    }
}

/// Run from u0 to cfg.t_end with adaptive dt (halving on relaxation stress or
/// solver failure, never increasing), observing every `observer_stride`
/// initial-size steps. Step failures end the run with a partial record.
pub fn evolve(u0: &ComplexField, cfg: &EvolutionConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let grid = &u0.grid;
    let flow = Flow::new(grid, cfg);
    let w = eval_w(grid).to_complex();
    let h1_w = h1_norm_sq(&w);
    let k_w = flow.discrete_kinetic(&w.values);
    let dt_min = cfg.dt_min();
    let obs_dt = cfg.dt * cfg.observer_stride as f64;

    let mut st = Stepper::new(&flow, &u0.values, cfg.dt);
    let mut absorbed = 0.0;
    let first = observe(&flow, &st.u, 0.0, cfg.dt, 0.0, h1_w);
    let (energy0, mass0) = (first.energy, first.mass);
    let mut samples = vec![first];
    let mut fields = Vec::new();
    if cfg.keep_fields {
        fields.push((0.0, u0.clone()));
    }
    // time is kept in integer ticks of dt/2^TICK_BITS so observation instants
    // stay exact under repeated halving
    const TICK_BITS: u32 = 48;
    let unit = cfg.dt / (1u128 << TICK_BITS) as f64;
    let full = 1u128 << TICK_BITS;
    let end_ticks = (cfg.t_end / unit).round() as u128;
    let obs_ticks = full * cfg.observer_stride as u128;
    let mut level = 0u32;
    let mut ticks = 0u128;
    let mut next_obs = obs_ticks;
    let mut steps = 0usize;
    let mut below_since: Option<f64> = None;

    let endpoint = loop {
        if ticks >= end_ticks {
            break Endpoint::Completed;
        }
        if steps >= cfg.max_steps {
            break Endpoint::Stalled { t: st.t, reason: "step cap reached".into() };
        }
        let nominal = full >> level;
        let adv = nominal.min(end_ticks - ticks).min(next_obs - ticks);
        let dt = adv as f64 * unit;
        if (dt - st.dt).abs() > 1e-12 * dt {
            st.set_dt(dt);
        }
        let accepted = match st.trial() {
            Ok((un, phi, res)) if res <= cfg.relax_tol => {
                let mid: Vec<Complex64> = st.u.iter().zip(&un).map(|(a, b)| 0.5 * (a + b)).collect();
                absorbed += st.dt * flow.absorption_rate(&mid);
                st.commit(un, phi, res);
                ticks += adv;
                st.t = ticks as f64 * unit;
                steps += 1;
                true
            }
            Ok(_) | Err(Error::SolverDiverged(_)) | Err(Error::SingularSolve(_)) => false,
            Err(e) => break Endpoint::Failed { t: st.t, error: e.to_string() },
        };
        let kin = flow.discrete_kinetic(&st.u);
        let grad_ratio = (kin / k_w).sqrt();
        if !accepted {
            level += 1;
            if level >= TICK_BITS || cfg.dt / ((1u64 << level) as f64) < dt_min {
                if grad_ratio > cfg.blowup_factor {
                    break Endpoint::Blowup { t_star: st.t };
                }
                break Endpoint::Stalled { t: st.t, reason: format!("dt below dt_min at ‖∇u‖/‖∇W‖ = {grad_ratio:.3}") };
            }
            st.set_dt(cfg.dt / ((1u64 << level) as f64));
            continue;
        }
        if grad_ratio > 100.0 {
            break Endpoint::Blowup { t_star: st.t };
        }
        if ticks == next_obs || ticks == end_ticks {
            let s = observe(&flow, &st.u, st.t, st.dt, absorbed, h1_w);
            let ratio = s.potential_ratio;
            samples.push(s);
            if cfg.keep_fields {
                fields.push((st.t, ComplexField { grid: grid.clone(), values: st.u.clone() }));
            }
            if ticks == next_obs {
                next_obs += obs_ticks;
            }
            if let Some(th) = cfg.scatter_stop {
                if ratio < th {
                    let since = *below_since.get_or_insert(st.t);
                    if since <= 0.75 * st.t && st.t > 4.0 * obs_dt {
                        break Endpoint::ScatterProxy { t: st.t };
                    }
                } else {
                    below_since = None;
                }
            }
        }
    };
    let energy_drift = samples.iter().map(|s| (s.energy - energy0).abs()).fold(0.0, f64::max);
    Ok(TrajectoryRecord {
        samples,
        fields,
        endpoint,
        h1_w,
        energy0,
        mass0,
        energy_drift,
        final_field: ComplexField { grid: grid.clone(), values: st.u },
        steps,
        dt_final: st.dt,
    })
}

/// Terminal potential ratio ∫|u|^{2*}/∫|∇u|² (0 for the zero field).
pub fn scatter_proxy(rec: &TrajectoryRecord) -> f64 {
    rec.samples.last().map(|s| s.potential_ratio).unwrap_or(0.0)
}

/// Potential ratio below `threshold` over the last quarter of the run.
pub fn is_dispersing(rec: &TrajectoryRecord, threshold: f64) -> bool {
    let t_last = match rec.samples.last() {
        Some(s) => s.t,
        None => return false,
    };
    rec.samples.iter().filter(|s| s.t >= 0.75 * t_last).all(|s| s.potential_ratio < threshold)
}

/// The time-reversal symmetry u(t) ↦ ū(−t): backward runs are conjugate-then-forward.
pub fn conjugate(u: &ComplexField) -> ComplexField {
    u.conj()
}

/// Closed-form radial solution of i u_t + Δu = 0 from a Gaussian e^{−r²/(2σ²)}.
pub fn free_gaussian(dim: usize, sigma: f64, t: f64, r: f64) -> Complex64 {
    let s2 = Complex64::new(sigma * sigma, 0.0);
    let d = s2 + 2.0 * I * t;
    (s2 / d).powf(dim as f64 / 2.0) * (-(r * r) / (2.0 * d)).exp()
}
