"""Smoke test for the Python extension.

Builds the extension with cargo when it is not importable yet, loads it from
a scratch directory and exercises the main entry points.

    python3 python/smoke.py
"""

import importlib
import json
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_extension():
    try:
        return importlib.import_module("mimo_placement")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "mimo-placement-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "release", "libmimo_placement_py.so")
    scratch = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(scratch, "mimo_placement.so"))
    sys.path.insert(0, scratch)
    return importlib.import_module("mimo_placement")


def main():
    mp = load_extension()
    assert "toy" in mp.SCENARIOS

    radar = mp.Radar.scenario("toy")
    grid = mp.Grid.scenario("toy")
    assert (radar.transmitters, radar.pulses, radar.receivers) == (2, 2, 2)
    assert len(grid) > 0
    assert mp.Radar.from_json(radar.to_json()).to_json() == radar.to_json()

    full = mp.Selection.full(radar)
    assert full.num_pulses == 4 and full.num_receivers == 2
    a_full = mp.evaluate(radar, grid, json.dumps({"kind": "A_OPT"}), full)
    traces = mp.crlb_traces(radar, grid, full)
    assert len(traces) == len(grid)
    assert abs(max(traces) - a_full) <= 1e-9 * a_full

    job = {
        "version": 1,
        "scenario": "desk_fixed_rx",
        "criterion": {"kind": "A_OPT"},
        "budgets": {"K_P": 6},
        "solver": "exhaustive",
    }
    sel, objective = mp.design(json.dumps(job))
    assert sel.num_pulses == 6 and sel.num_receivers == 3
    sel2, objective2 = mp.design(json.dumps(job), k_p=8)
    assert sel2.num_pulses == 8 and objective2 <= objective

    job["solver"] = "greedy_mfp"
    job["criterion"] = {"kind": "MFP", "aggregation": "MEAN_OVER_GRID"}
    greedy, _ = mp.design(json.dumps(job))
    assert greedy.num_pulses == 6

    bp = mp.beampattern(radar, full, [0.0, 0.25, 0.5])
    assert abs(bp[0]) < 1e-12 and max(bp) <= 1e-12
    af = mp.ambiguity_velocity(radar, full, [0.0, 1.0])
    assert abs(af[0]) < 1e-12

    out = tempfile.mkdtemp()
    written = json.loads(mp.design_to_dir(json.dumps(job), out))
    assert set(["A", "b", "K_P", "K_R", "objective", "criterion", "solver", "seed", "stats"]) <= set(written)
    assert os.path.exists(os.path.join(out, "crlb.csv"))

    try:
        mp.Selection([[1, 2]], [1])
    except ValueError:
        pass
    else:
        raise AssertionError("non-binary selection accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
