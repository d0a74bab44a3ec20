"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; the best of
``--repeat`` runs is reported together with the speedup.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from mammobot import _kernels_py as py
from mammobot.scenario import ArmModel

try:
    from mammobot import _kernels as cy
except ImportError:
    cy = None

ARM = ArmModel()
BOXES = np.array([[-700.0, -420.0, -50.0, -250.0, 150.0, 60.0], [100.0, 100.0, 100.0, 300.0, 300.0, 500.0]])
HOME = np.array([0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0])


def cases(mod):
    """name -> zero-argument callable running one workload on ``mod``."""
    rng = np.random.default_rng(0)
    dh = ARM.dh_array
    qs = HOME + rng.uniform(-1, 1, (200, 6))
    out = np.empty((8, 3))

    def origins():
        for q in qs:
            mod.dh_origins(dh, q, ARM.tool_length, out)

    def clearance():
        for q in qs:
            mod.config_clearance(dh, q, ARM.tool_length, ARM.link_radius, BOXES, ARM.samples_per_link)

    q0, q1 = HOME - 0.5, HOME + 0.5

    def edge():
        # free space, so every sample along the 6 rad segment is checked
        mod.edge_clear(dh, q0, q1, ARM.tool_length, ARM.link_radius, BOXES[:0], ARM.samples_per_link, 0.005, ARM.reach)

    steps = 1000
    noise = rng.normal(size=(steps, 3)) * 0.05
    plate = np.zeros(3)
    normal = np.array([0.0, 0.0, 1.0])
    pos = np.empty((steps, 3))
    vn = np.empty(steps)
    f = np.empty(steps)
    ft = np.empty(steps)

    def descend():
        mod.descend_loop(np.array([0.0, 0.0, 10.0]), -normal, 5.0, plate, normal, 1.0, 0.05, 1e9, 0.01, steps,
                         noise, pos, f)

    def scan():
        mod.scan_loop(np.array([0.0, 0.0, -2.0]), np.zeros(3), np.array([1.0, 0.0, 0.0]), -normal, 7.27, 5.0, plate,
                      normal, 1.0, 0.05, 3.0, 4.0 / 3.0, 0.0, 10.0, 0.01, steps, noise, np.zeros(3), pos, vn, f, ft)

    return {
        "dh_origins x200": origins,
        "config_clearance x200": clearance,
        "edge_clear 6 rad @ 0.005": edge,
        "descend_loop 1000 steps": descend,
        "scan_loop 1000 steps": scan,
    }


def best(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", default=None, help="also write results here")
    args = p.parse_args(argv)
    if cy is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    py_cases, cy_cases = cases(py), cases(cy)
    rows = []
    print(f"{'kernel':28s} {'python ms':>11s} {'cython ms':>11s} {'speedup':>9s}")
    for name in py_cases:
        tp = best(py_cases[name], args.repeat)
        tc = best(cy_cases[name], args.repeat)
        rows.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc})
        print(f"{name:28s} {1e3 * tp:11.3f} {1e3 * tc:11.3f} {tp / tc:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
