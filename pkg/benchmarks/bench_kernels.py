"""Time the hot kernels under the numba and pure-numpy backends.

The backend is fixed at import time, so each backend is measured in its own
subprocess (``COSCHED_NUMBA=1`` / ``COSCHED_NUMBA=0``) and the results are
printed side by side::

    python benchmarks/bench_kernels.py [--repeat 200] [--steps 2000]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()  # warm-up, includes compilation
    best = float("inf")
    for _ in range(max(3, repeat // 20)):
        t0 = time.perf_counter()
        for _ in range(20):
            fn()
        best = min(best, (time.perf_counter() - t0) / 20)
    return best


def measure(repeat, steps):
    import numpy as np

    from cosched import _kernels
    from cosched._accel import backend_name
    from cosched.cli import resolve_config
    from cosched.dynamics import run
    from cosched.experiments.build import build_instance

    results = {"backend": backend_name()}
    rng = np.random.default_rng(0)
    for kind in ("svm", "regression", "logistic", "nonconvex"):
        cfg, _ = resolve_config("preset:logistic" if kind == "logistic" else f"preset:{kind}")
        inst = build_instance(cfg.replace("solver", alpha=1e-6))
        b = inst.bundle
        Y = rng.uniform(-1, 1, size=(b.n, b.m))
        G = np.empty_like(Y)
        results[f"grad_{kind}_us"] = 1e6 * _best(lambda: b.ml_grads(Y, G), repeat)

    cfg, _ = resolve_config("preset:svm")
    inst = build_instance(cfg)
    b = inst.bundle
    W = inst.schedule.graphs[0].weights
    x = np.full(b.n, inst.b / b.n)
    Y = rng.uniform(-1, 1, size=(b.n, b.m))
    Z = np.zeros_like(Y)
    zinc = np.empty_like(Y)
    tup = b.cpu_tuple()
    results["advance_us"] = 1e6 * _best(
        lambda: _kernels.advance(x.copy(), Y.copy(), Z, W, tup, 1e-3, 0.05, 0.125, True, zinc), repeat)

    sc = inst.solver_config()
    short = type(sc)(**{**sc.__dict__, "steps": steps, "record_every": steps})
    run(inst.bundle, inst.schedule, type(sc)(**{**sc.__dict__, "steps": 5}), inst.b)
    t0 = time.perf_counter()
    run(inst.bundle, inst.schedule, short, inst.b)
    results["svm_step_us"] = 1e6 * (time.perf_counter() - t0) / steps
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        print(json.dumps(measure(args.repeat, args.steps)))
        return 0
    rows = {}
    for flag in ("1", "0"):
        env = dict(os.environ, COSCHED_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat),
                              "--steps", str(args.steps)], env=env, capture_output=True, text=True, check=True)
        res = json.loads(out.stdout.strip().splitlines()[-1])
        rows[res.pop("backend")] = res
    names = list(rows)
    keys = list(rows[names[0]])
    print(f"{'kernel':<22}" + "".join(f"{n:>16}" for n in names) + f"{'speedup':>10}")
    for k in keys:
        vals = [rows[n][k] for n in names]
        print(f"{k:<22}" + "".join(f"{v:>16.2f}" for v in vals) + f"{vals[1] / vals[0]:>10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
