#!/usr/bin/env python3
"""Time the compiled loop kernels against the vectorized numpy fallback.

Runs the per-batch gradient (the training hot path), the full-dataset loss
evaluation and the Adam update for the 2-D and 10-D network shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]
"""
import argparse
import json
import timeit

import numpy as np

from lyapnet import kernels
from lyapnet._accel import USE_NUMBA
from lyapnet.dynamics import builtin, eval_field
from lyapnet.loss import BoundSpec, LossSpec
from lyapnet.network import NetShape, init

CASES = [
    ("example_2d", NetShape(2, 2, 1, 128), BoundSpec(0.1, 10.0)),
    ("example_10d", NetShape(10, 5, 2, 128), BoundSpec(0.2, 10.0)),
]


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_case(system, shape, bounds, repeat, eval_points):
    vf = builtin(system)
    theta = init(shape, 0).theta
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (eval_points, shape.n))
    FX = eval_field(vf, X)
    xb, fb = X[:32].copy(), FX[:32].copy()
    largs = LossSpec("pdi", 1.0, bounds).kernel_args
    dims = shape.dims
    g = np.ones_like(theta)

    variants = {
        "numpy": (kernels.loss_grad_numpy, kernels.loss_terms_numpy, kernels.adam_numpy),
    }
    if USE_NUMBA:
        variants["numba"] = (kernels.loss_grad_loops, kernels.loss_terms_loops, kernels.adam_loops)

    rows = []
    for name, (grad_fn, terms_fn, adam_fn) in variants.items():
        # warm up (triggers compilation for the jitted variant)
        grad_fn(theta, xb, fb, *dims, *largs)
        terms_fn(theta, X[:64], FX[:64], *dims, *largs)
        adam_fn(theta.copy(), g, np.zeros_like(theta), np.zeros_like(theta), 1, 1e-3, 0.9, 0.999, 1e-7)
        th = theta.copy()
        m1, m2 = np.zeros_like(th), np.zeros_like(th)
        rows.append({
            "system": system,
            "backend": name,
            "batch32_grad_us": 1e6 * best_of(lambda: grad_fn(theta, xb, fb, *dims, *largs), repeat, 200),
            f"eval_{eval_points}_ms": 1e3 * best_of(lambda: terms_fn(theta, X, FX, *dims, *largs), repeat, 3),
            "adam_us": 1e6 * best_of(lambda: adam_fn(th, g, m1, m2, 1, 1e-3, 0.9, 0.999, 1e-7), repeat, 200),
        })
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--eval-points", type=int, default=20_000)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args()

    rows = []
    for system, shape, bounds in CASES:
        rows += bench_case(system, shape, bounds, args.repeat, args.eval_points)

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    if not USE_NUMBA:
        print("numba disabled via LYAPNET_DISABLE_NUMBA; showing the numpy fallback only")
    keys = [k for k in rows[0] if k not in ("system", "backend")]
    print(f"{'system':<12} {'backend':<7} " + " ".join(f"{k:>16}" for k in keys))
    for r in rows:
        print(f"{r['system']:<12} {r['backend']:<7} " + " ".join(f"{r[k]:16.1f}" for k in keys))
    for system, _, _ in CASES:
        by = {r["backend"]: r for r in rows if r["system"] == system}
        if "numba" in by:
            speedup = by["numpy"]["batch32_grad_us"] / by["numba"]["batch32_grad_us"]
            print(f"{system}: compiled batch gradient is {speedup:.1f}x the numpy fallback")


if __name__ == "__main__":
    main()
