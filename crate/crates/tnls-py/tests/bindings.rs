use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(tnls_py::tnls_py)(py);
        let locals = PyDict::new(py);
        locals.set_item("tnls", m).unwrap();
        f(py, &locals)
    })
}

fn eval(py: Python<'_>, locals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(locals), None)
}

#[test]
fn ground_state_and_spectrum_through_python() {
    with_module(|py, l| {
        eval(
            py,
            l,
            r#"
g = tnls.Grid(3, m=2000)
gs = tnls.GroundState(g)
assert abs(gs.energy_w / (gs.h1_w / 3) - 1) < 1e-8
assert abs(gs.sobolev_cn / tnls.talenti_constant(3) - 1) < 1e-6
assert len(gs.w()) == g.m == 2000
sp = tnls.Spectrum(g)
assert 0.72 < sp.e0 < 0.74, sp.e0
qw, qiw, qw1 = sp.q_values()
assert abs(qw + 2) < 1e-6
assert sp.coercivity(trials=5, seed=1) > 0
"#,
        )
        .unwrap();
    });
}

#[test]
fn flow_modulation_and_virial_through_python() {
    with_module(|py, l| {
        eval(
            py,
            l,
            r#"
g = tnls.Grid(3, m=2000)
gs = tnls.GroundState(g)
w = gs.w()
rec = tnls.evolve(w.scale(0.9), 0.2)
assert rec["endpoint"] == "completed"
assert rec["relative_energy_drift"] < 1e-6
st = gs.fit_modulation(w.rescale_phase(0.3, 1.2))
assert abs(st["theta"] - 0.3) < 1e-6 and abs(st["mu"] - 1.2) < 1e-6
assert tnls.g_r(w, 5.0) == 0.0
assert abs(tnls.a_r(w, 10.0)) < 5e-3 * gs.h1_w
"#,
        )
        .unwrap();
    });
}

#[test]
fn errors_become_value_errors() {
    with_module(|py, l| {
        eval(
            py,
            l,
            r#"
for bad in (lambda: tnls.Grid(1), lambda: tnls.a_r(tnls.GroundState(tnls.Grid(3, m=500)).w(), 5.0, "box"),
            lambda: tnls.run_scenario("[grid]\nbogus = 1", "ground"), lambda: tnls.run_scenario("", "nope")):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
"#,
        )
        .unwrap();
        let ok: String = l.get_item("tnls").unwrap().unwrap().call_method1("run_scenario", ("", "ground")).unwrap().extract().unwrap();
        let v: serde_json::Value = serde_json::from_str(&ok).unwrap();
        assert_eq!(v["pass"], true);
    });
}
