"""Command-line entry point: ``cosched <subcommand> ...``."""

import argparse
import dataclasses
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import compare_baseline, ml_reference, spectral_check, system_matrix
from .experiments import build as _build
from .experiments.checks import KINDS, gradcheck
from .experiments.config import ConfigError, load_config, parse_config
from .experiments.data import generate_dataset, write_csv
from .experiments.runner import EXIT_CONFIG, EXIT_OK, run_experiment
from .topology import build_erdos_renyi, laplacian

GRADCHECK_TOL = (1e-5, 1e-4)


def preset_names():
    return sorted(p.stem for p in resources.files("cosched").joinpath("presets").iterdir() if p.name.endswith(".ini"))


def resolve_config(spec):
    """Load ``spec`` as a file path, or ``preset:<name>`` from the bundled presets.

    Returns ``(config, base_dir)`` where ``base_dir`` anchors relative paths.
    """
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1]
        res = resources.files("cosched").joinpath("presets", f"{name}.ini")
        if not res.is_file():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        return parse_config(res.read_text(), source=f"preset:{name}"), None
    path = Path(spec)
    return load_config(path), path.parent


def _apply_overrides(cfg, args):
    solver = {}
    if getattr(args, "seed", None) is not None:
        solver["seed"] = args.seed
    if getattr(args, "record_every", None) is not None:
        solver["record_every"] = args.record_every
    if getattr(args, "steps", None) is not None:
        solver["steps"] = args.steps
    return cfg.replace("solver", **solver) if solver else cfg


def cmd_run(args):
    cfg, base = resolve_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out_dir = Path(args.out_dir) if args.out_dir else Path("runs") / cfg.name
    res = run_experiment(cfg, out_dir, base_dir=base, per_node=args.per_node_trace)
    if res.exit_code != EXIT_OK:
        print(f"error: {res.message}", file=sys.stderr)
        return res.exit_code
    last = res.trace.records[-1]
    print(f"wrote {out_dir}  steps={last.step}  alpha={res.instance.alpha:.6g}  "
          f"feasibility_gap={last.feasibility_gap:.3e}  consensus_gap={last.consensus_gap:.3e}  "
          f"cost_residual={last.cost_residual:.6g}")
    return EXIT_OK


def cmd_spectral(args):
    cfg, base = resolve_config(args.config)
    inst = _build.build_instance(cfg, base)
    bundle = inst.bundle
    print(f"lambda2_abs={inst.lambda2:.6g}  lipschitz={inst.lipschitz:.6g}  alpha_bar={inst.alpha_bar:.6g}  "
          f"alpha={inst.alpha:.6g}")
    if not bundle.m:
        print("no ML objective: the tracking system matrix is empty")
        return EXIT_OK
    y_star = ml_reference(bundle)
    H = bundle.hessians(np.tile(y_star, (bundle.n, 1)))
    rho = cfg.quantizer.rho if cfg.quantizer.enabled else 0.0
    gains = [("linear", 1.0)]
    if rho:
        gains += [("low", float(np.exp(-rho / 2))), ("high", float(np.exp(rho / 2)))]
    for idx, g in enumerate(inst.schedule.graphs):
        lap = laplacian(g)
        for label, gain in gains:
            zeros, top = spectral_check(system_matrix(lap, H, inst.alpha, gain), m=bundle.m)
            print(f"graph={idx} gain={label}  zero_count={zeros}  max_nonzero_real={top:.6e}")
    return EXIT_OK


def cmd_compare_baseline(args):
    cfg, base = resolve_config(args.config)
    if not cfg.cpu.enabled:
        raise ConfigError("[cpu] enabled: compare-baseline needs the cpu section")
    start = cfg.cpu.seed if args.seed is None else args.seed
    n = cfg.topology.n
    ratios = []
    print("instance,seed,cost_balancing,cost_sum_preserving,ratio")
    for k in range(args.instances):
        c = dataclasses.replace(cfg, cpu=dataclasses.replace(cfg.cpu, seed=start + k))
        cpu = _build.build_cpu(c, n)
        bal, opt, ratio = compare_baseline(cpu)
        ratios.append(ratio)
        print(f"{k},{start + k},{bal!r},{opt!r},{ratio!r}")
    if ratios:
        print(f"# mean_ratio={float(np.mean(ratios))!r} max_ratio={float(np.max(ratios))!r}")
    return EXIT_OK


def cmd_gradcheck(args):
    res = gradcheck(points=args.points, seed=args.seed)
    ok = True
    for kind, (ge, he) in res.items():
        good = ge < GRADCHECK_TOL[0] and he < GRADCHECK_TOL[1]
        ok &= good
        print(f"{kind:<11} grad_rel_err={ge:.3e}  hess_rel_err={he:.3e}  {'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else 1


def cmd_gen_data(args):
    out = Path(args.out)
    if args.kind == "graph":
        g = build_erdos_renyi(args.n_nodes, args.p, seed=args.seed)
        g.save(out)
        print(f"wrote {out} (n={g.n}, edges={g.num_edges})")
        return EXIT_OK
    params = {"n_points": args.n_points, "n_nodes": args.n_nodes}
    for key in ("dim", "noise", "separation", "margin", "coef_range"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    ds = generate_dataset(args.kind, params, seed=args.seed)
    write_csv(ds, out)
    print(f"wrote {out} ({len(ds)} rows)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cosched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and write its artifacts")
    p.add_argument("config", help="config file, or preset:<name>")
    p.add_argument("--seed", type=int, help="override [solver] seed")
    p.add_argument("--out-dir", help="artifact directory (default runs/<name>)")
    p.add_argument("--record-every", type=int, help="override [solver] record_every")
    p.add_argument("--steps", type=int, help="override [solver] steps")
    p.add_argument("--per-node-trace", action="store_true", help="add x_0..x_{n-1} columns to the trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("spectral", help="eigen-structure of the tracking system matrix")
    p.add_argument("config")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("compare-baseline", help="sum-preserving optimum vs balancing allocation")
    p.add_argument("config")
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seed", type=int, help="first instance seed (default [cpu] seed)")
    p.set_defaults(func=cmd_compare_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference check of every ML objective")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV or an edge-list graph")
    p.add_argument("kind", choices=KINDS + ("graph",))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-points", type=int, default=1000)
    p.add_argument("--n-nodes", type=int, default=20)
    p.add_argument("--dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--separation", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--coef-range", type=float)
    p.add_argument("--p", type=float, default=0.4, help="link probability (graph)")
    p.set_defaults(func=cmd_gen_data)
    return parser


def _plain_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None):
    warnings.formatwarning = _plain_warning
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
