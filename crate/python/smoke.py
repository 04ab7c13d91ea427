"""Smoke test for the Python extension.

Build it first with `cargo build --release -p recoilfree-python`, then run
`python3 python/smoke.py`. The script loads the shared library straight
from target/ so no install step is needed.
"""

import importlib.util
import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "librecoilfree_py.so"
        if lib.exists():
            break
    else:
        sys.exit("librecoilfree_py.so not found; run `cargo build --release -p recoilfree-python`")
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "recoilfree_py.so")
    spec = importlib.util.spec_from_file_location("recoilfree_py", tmp / "recoilfree_py.so")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    rf = load()
    params = rf.SystemParams.sr88()
    print(params)

    # Without recoil a resonant pi/2 pulse is exactly Rx(pi/2).
    ideal = params.with_eta(0.0)
    pulse = rf.PulseShape.constant(math.pi / (2 * ideal.omega_rabi), 0.0)
    record = rf.tomography(pulse, ideal, "rx90")
    assert record["j_uni"] < 1e-12 and record["j_ent"] < 1e-12, record

    # With recoil the same pulse leaves the motion displaced.
    record = rf.tomography(pulse, params, "rx90")
    assert record["j_mot"] > 1e-4, record

    x, p = rf.trajectory(pulse, params, math.pi / 2, 0.0, [pulse.duration])[0]
    x0, p0 = rf.mossbauer_trajectory(params, math.pi / 2, 0.0, pulse.duration)
    assert abs(x - x0) < 1e-9 and abs(p - p0) < 1e-9

    shaped, summary = rf.optimize(params, 15e-6, n_c=4, restarts=1, max_iterations=5, seed=1)
    assert rf.PulseShape.from_json(shaped.to_json()).a == shaped.a
    print("short optimization:", json.dumps(summary))

    series = rf.benchmark(params.with_p0(0.99), "idealized-L4", 20, 10, seed=3)
    assert series["records"][-1]["n"] == 20
    print("saturation at p0=0.99:", rf.rb_saturation(0.99))
    print("ok")


if __name__ == "__main__":
    main()
