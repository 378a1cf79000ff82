//! Python bindings: grids, fields, the ground state, the linearized spectrum,
//! the flow, modulation, virial functionals and the scenario runner.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tnls::dynamics::{evolve as evolve_rs, EvolutionConfig};
use tnls::experiments::{run_scenario as run_scenario_rs, talenti_constant as talenti_rs, Config, ScenarioName};
use tnls::grid::{h1_inner, h1_norm_sq, make_grid, rescale_phase, ComplexField as RsField, OuterBc, RadialGrid};
use tnls::ground_state::{energy, GroundStateBundle};
use tnls::linearized::{coercivity_probe, eigenpair, q_values, EigenPair, LinearizedOperator};
use tnls::modulation::fit_modulation;
use tnls::profiles::{assemble_wka, build_profiles};
use tnls::virial::{a_r as a_r_rs, f_r as f_r_rs, g_r as g_r_rs, make_cutoff, CutoffKind};

fn py_err(e: tnls::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_bc(bc: &str) -> PyResult<OuterBc> {
    match bc {
        "robin" | "ground-state-robin" => Ok(OuterBc::GroundStateRobin),
        "dirichlet" => Ok(OuterBc::Dirichlet),
        "neumann" => Ok(OuterBc::Neumann),
        other => Err(PyValueError::new_err(format!("unknown boundary condition '{other}'"))),
    }
}

fn parse_cutoff(kind: &str) -> PyResult<CutoffKind> {
    match kind {
        "sec3" => Ok(CutoffKind::Sec3),
        "sec4" => Ok(CutoffKind::Sec4),
        "mass" => Ok(CutoffKind::Mass),
        other => Err(PyValueError::new_err(format!("unknown cutoff '{other}': expected sec3 | sec4 | mass"))),
    }
}

/// Radial grid in dimension N on [0, r_max].
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Grid {
    inner: Arc<RadialGrid>,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (dim, r_max = 100.0, m = 4000, stretch = 3.0))]
    fn new(dim: usize, r_max: f64, m: usize, stretch: f64) -> PyResult<Self> {
        Ok(Grid { inner: make_grid(dim, r_max, m, stretch).map_err(py_err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn r_max(&self) -> f64 {
        self.inner.r_max
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes.clone()
    }

    /// ∫ f dx over the ball with a power-law tail beyond r_max.
    fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
        if values.len() != self.inner.m {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.m, values.len())));
        }
        Ok(self.inner.integrate_with_tail(&values))
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, r_max={}, m={})", self.inner.dim, self.inner.r_max, self.inner.m)
    }
}

/// Complex radial field on a grid.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Field {
    inner: RsField,
}

#[pymethods]
impl Field {
    #[new]
    #[pyo3(signature = (grid, re, im = None))]
    fn new(grid: &Grid, re: Vec<f64>, im: Option<Vec<f64>>) -> PyResult<Self> {
        let im = im.unwrap_or_else(|| vec![0.0; re.len()]);
        if re.len() != im.len() {
            return Err(PyValueError::new_err("re and im differ in length"));
        }
        let values = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        Ok(Field { inner: RsField::new(&grid.inner, values).map_err(py_err)? })
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid { inner: self.inner.grid.clone() }
    }

    fn re(&self) -> Vec<f64> {
        self.inner.re()
    }

    fn im(&self) -> Vec<f64> {
        self.inner.im()
    }

    fn h1_norm_sq(&self) -> f64 {
        h1_norm_sq(&self.inner)
    }

    fn h1_inner(&self, other: &Field) -> PyResult<f64> {
        h1_inner(&self.inner, &other.inner).map_err(py_err)
    }

    fn energy(&self) -> f64 {
        energy(&self.inner)
    }

    fn scale(&self, c: f64) -> Field {
        Field { inner: self.inner.scale_re(c) }
    }

    fn __add__(&self, other: &Field) -> PyResult<Field> {
        if !self.inner.grid.same_as(&other.inner.grid) {
            return Err(PyValueError::new_err("fields live on different grids"));
        }
        Ok(Field { inner: self.inner.add(&other.inner) })
    }

    /// The symmetry element e^{iθ} μ^{−(N−2)/2} f(·/μ).
    fn rescale_phase(&self, theta: f64, mu: f64) -> PyResult<Field> {
        Ok(Field { inner: rescale_phase(&self.inner, theta, mu).map_err(py_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.values.len()
    }
}

/// W, W₁ and the reference constants on a grid.
#[pyclass(frozen)]
pub struct GroundState {
    inner: GroundStateBundle,
}

#[pymethods]
impl GroundState {
    #[new]
    fn new(grid: &Grid) -> Self {
        GroundState { inner: GroundStateBundle::new(&grid.inner) }
    }

    #[getter]
    fn h1_w(&self) -> f64 {
        self.inner.h1_w
    }

    #[getter]
    fn energy_w(&self) -> f64 {
        self.inner.energy_w
    }

    #[getter]
    fn sobolev_cn(&self) -> f64 {
        self.inner.sobolev_cn
    }

    #[getter]
    fn crit_w(&self) -> f64 {
        self.inner.crit_w
    }

    fn w(&self) -> Field {
        Field { inner: self.inner.w_complex() }
    }

    fn w1(&self) -> Field {
        Field { inner: self.inner.w1_complex() }
    }

    /// (‖f‖²_{Ḣ¹} − ‖W‖²_{Ḣ¹}, its magnitude)
    fn dee(&self, f: &Field) -> (f64, f64) {
        self.inner.dee(&f.inner)
    }

    fn fit_modulation<'py>(&self, py: Python<'py>, u: &Field) -> PyResult<Bound<'py, PyDict>> {
        let st = fit_modulation(&u.inner, &self.inner).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("theta", st.theta)?;
        d.set_item("mu", st.mu)?;
        d.set_item("alpha", st.alpha)?;
        d.set_item("dee_signed", st.dee_signed)?;
        d.set_item("dee_mag", st.dee_mag)?;
        d.set_item("ortho_residual", st.ortho_residual)?;
        d.set_item("ok", st.ok)?;
        d.set_item("utilde", Field { inner: st.utilde })?;
        Ok(d)
    }
}

/// Linearized operator at W and its real eigenpair ±e₀.
#[pyclass(frozen)]
pub struct Spectrum {
    op: LinearizedOperator,
    pair: EigenPair,
    gs: GroundStateBundle,
}

#[pymethods]
impl Spectrum {
    #[new]
    #[pyo3(signature = (grid, bc = "robin"))]
    fn new(grid: &Grid, bc: &str) -> PyResult<Self> {
        let op = LinearizedOperator::new(&grid.inner, parse_bc(bc)?);
        let pair = eigenpair(&op).map_err(py_err)?;
        Ok(Spectrum { op, pair, gs: GroundStateBundle::new(&grid.inner) })
    }

    #[getter]
    fn e0(&self) -> f64 {
        self.pair.e0
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.pair.residual
    }

    fn yplus(&self) -> Field {
        Field { inner: self.pair.yplus.clone() }
    }

    fn yminus(&self) -> Field {
        Field { inner: self.pair.yminus() }
    }

    fn apply_l(&self, f: &Field) -> PyResult<Field> {
        Ok(Field { inner: self.op.apply_l(&f.inner).map_err(py_err)? })
    }

    fn quadratic_q(&self, f: &Field) -> PyResult<f64> {
        self.op.quadratic_q(&f.inner).map_err(py_err)
    }

    fn bilinear_b(&self, f: &Field, g: &Field) -> PyResult<f64> {
        self.op.bilinear_b(&f.inner, &g.inner).map_err(py_err)
    }

    /// (Q(W), Q(iW), Q(W₁)) / ‖W‖²_{Ḣ¹}
    fn q_values(&self) -> (f64, f64, f64) {
        q_values(&self.op, &self.gs)
    }

    #[pyo3(signature = (trials = 200, seed = 0))]
    fn coercivity(&self, trials: usize, seed: u64) -> PyResult<f64> {
        coercivity_probe(&self.op, &self.pair, trials, seed).map_err(py_err)
    }

    /// W_k^a at time t.
    fn assemble_wka(&self, a: f64, k: usize, t: f64) -> PyResult<Field> {
        let ps = build_profiles(a, k, &self.op, &self.pair).map_err(py_err)?;
        Ok(Field { inner: assemble_wka(&ps, t) })
    }
}

/// Evolve u0 to t_end; returns the sampled observables and the final field.
#[pyfunction]
#[pyo3(signature = (u0, t_end, dt = 2e-3, stride = 50))]
fn evolve<'py>(py: Python<'py>, u0: &Field, t_end: f64, dt: f64, stride: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = EvolutionConfig { dt, t_end, observer_stride: stride, ..Default::default() };
    let rec = evolve_rs(&u0.inner, &cfg).map_err(py_err)?;
    let d = PyDict::new(py);
    let endpoint = serde_json::to_value(&rec.endpoint).expect("endpoint serializes");
    d.set_item("endpoint", endpoint["kind"].as_str().unwrap_or("unknown"))?;
    d.set_item("t", rec.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("h1", rec.samples.iter().map(|s| s.h1).collect::<Vec<_>>())?;
    d.set_item("dee_signed", rec.samples.iter().map(|s| s.dee_signed).collect::<Vec<_>>())?;
    d.set_item("energy", rec.samples.iter().map(|s| s.energy).collect::<Vec<_>>())?;
    d.set_item("potential_ratio", rec.samples.iter().map(|s| s.potential_ratio).collect::<Vec<_>>())?;
    d.set_item("relative_energy_drift", rec.relative_energy_drift())?;
    d.set_item("final", Field { inner: rec.final_field })?;
    Ok(d)
}

fn cutoff(u: &Field, radius: f64, kind: &str) -> PyResult<tnls::virial::Cutoff> {
    make_cutoff(parse_cutoff(kind)?, radius, &u.inner.grid).map_err(py_err)
}

/// Localized momentum G_R(u).
#[pyfunction]
#[pyo3(signature = (u, radius, kind = "sec3"))]
fn g_r(u: &Field, radius: f64, kind: &str) -> PyResult<f64> {
    g_r_rs(&u.inner, &cutoff(u, radius, kind)?).map_err(py_err)
}

/// Error term A_R(u) of the virial identity.
#[pyfunction]
#[pyo3(signature = (u, radius, kind = "sec3"))]
fn a_r(u: &Field, radius: f64, kind: &str) -> PyResult<f64> {
    a_r_rs(&u.inner, &cutoff(u, radius, kind)?).map_err(py_err)
}

/// Localized mass F_R(u).
#[pyfunction]
fn f_r(u: &Field, radius: f64) -> PyResult<f64> {
    f_r_rs(&u.inner, &cutoff(u, radius, "mass")?).map_err(py_err)
}

#[pyfunction]
fn talenti_constant(dim: usize) -> f64 {
    talenti_rs(dim)
}

/// Run a named scenario from TOML text; returns summary.json as a string.
#[pyfunction]
#[pyo3(signature = (config_toml, name, out = None))]
fn run_scenario(config_toml: &str, name: &str, out: Option<std::path::PathBuf>) -> PyResult<String> {
    let cfg = Config::from_toml(config_toml).map_err(py_err)?;
    let name: ScenarioName = name.parse().map_err(py_err)?;
    let s = run_scenario_rs(&cfg, name, out.as_deref()).map_err(py_err)?;
    Ok(s.to_json())
}

#[pymodule]
pub fn tnls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<GroundState>()?;
    m.add_class::<Spectrum>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(g_r, m)?)?;
    m.add_function(wrap_pyfunction!(a_r, m)?)?;
    m.add_function(wrap_pyfunction!(f_r, m)?)?;
    m.add_function(wrap_pyfunction!(talenti_constant, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
