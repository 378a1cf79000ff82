"""Smoke test for the tnls Python bindings.

Builds the extension with cargo (unless TNLS_PY_LIB points at a built
library), imports it and exercises each bound type once.

    python3 python/smoke_test.py
"""

import importlib.util
import json
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def built_library() -> Path:
    env = os.environ.get("TNLS_PY_LIB")
    if env:
        return Path(env)
    subprocess.run(
        ["cargo", "build", "-q", "-p", "tnls-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target"))
    for name in ("libtnls_py.so", "libtnls_py.dylib", "tnls_py.dll"):
        p = target / "debug" / name
        if p.exists():
            return p
    sys.exit("tnls-py library not found after build")


def load(lib: Path, tmp: Path):
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    dest = tmp / f"tnls_py{suffix}"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("tnls_py", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tnls = load(built_library(), Path(tmp))

        grid = tnls.Grid(3, m=2000)
        gs = tnls.GroundState(grid)
        w = gs.w()
        assert abs(gs.energy_w * 3 / gs.h1_w - 1) < 1e-8
        assert abs(gs.sobolev_cn / tnls.talenti_constant(3) - 1) < 1e-6
        print(f"{grid!r}: |W|^2_H1 = {gs.h1_w:.6f}, E(W) = {gs.energy_w:.6f}")

        sp = tnls.Spectrum(grid)
        assert sp.e0 > 0 and sp.residual < 1e-4
        print(f"e0 = {sp.e0:.6f}, residual = {sp.residual:.1e}")

        rec = tnls.evolve(w.scale(0.9), 0.5)
        assert rec["endpoint"] == "completed"
        assert max(rec["h1"]) < gs.h1_w
        print(f"0.9W to t=0.5: {rec['endpoint']}, energy drift {rec['relative_energy_drift']:.1e}")

        st = gs.fit_modulation(w.rescale_phase(0.4, 1.3))
        assert abs(st["theta"] - 0.4) < 1e-6 and abs(st["mu"] - 1.3) < 1e-6
        print(f"modulation: theta = {st['theta']:.8f}, mu = {st['mu']:.8f}")

        assert tnls.g_r(w, 5.0) == 0.0
        print(f"A_R(W), R = 10: {tnls.a_r(w, 10.0):.2e}")

        summary = json.loads(tnls.run_scenario("[grid]\ndim = 4", "ground", out=tmp))
        assert summary["pass"] and Path(tmp, "summary.json").exists()

        try:
            tnls.Grid(2)
        except ValueError as e:
            print(f"bad grid rejected: {e}")
        else:
            raise AssertionError("Grid(2) should fail")
    print("smoke test OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
