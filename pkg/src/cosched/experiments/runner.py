"""Experiment orchestration and on-disk artifacts.

One run writes into its output directory:

``trace.csv``
    versioned header comment, then one row per recording interval.
``metadata.json``
    resolved configuration, spectral constants, step size, wall time.
``summary.json``
    final residuals and, with CPU costs, the balancing-baseline comparison.
``checkpoint.txt``
    plain-text dump of the final state.
"""

import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .._accel import THREADS, backend_name
from ..analysis import compare_baseline, compute_references, make_recorder
from ..dynamics import DivergenceError, InfeasibleInitError, SystemState, run
from .build import build_instance
from .config import ConfigError, format_config

TRACE_SCHEMA = "cosched-trace v1"
CHECKPOINT_SCHEMA = "cosched-checkpoint v1"
TRACE_COLUMNS = ("step", "time", "feasibility_gap", "consensus_gap", "total_cost", "cost_residual", "lyapunov")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4


# --------------------------------------------------------------------------
# trace CSV


def _num(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def format_trace(trace, n, per_node=False):
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in trace.header.items())
    buf.write(f"# schema={TRACE_SCHEMA} n={n} {meta}\n")
    cols = list(TRACE_COLUMNS)
    if per_node:
        cols += [f"x_{i}" for i in range(n)]
    buf.write(",".join(cols) + "\n")
    for r in trace.records:
        row = [str(r.step), _num(r.time), _num(r.feasibility_gap), _num(r.consensus_gap),
               _num(r.total_cost), _num(r.cost_residual), _num(r.lyapunov)]
        if per_node:
            row += [_num(v) for v in r.x]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def read_trace(path):
    """Parse a trace CSV into ``(header_comment, columns)``; columns map name to array."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema="):
        raise ValueError(f"{path}: missing trace schema comment")
    names = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    data = np.array([[float(v) for v in r] for r in rows]).reshape(-1, len(names))
    return lines[0], {name: data[:, j] for j, name in enumerate(names)}


# --------------------------------------------------------------------------
# checkpoint


def save_checkpoint(state, path):
    lines = [
        f"# {CHECKPOINT_SCHEMA}",
        f"step {state.step}",
        f"b {state.b!r}",
        f"n {state.n}",
        f"m {state.m}",
        "x " + " ".join(repr(float(v)) for v in state.x),
    ]
    for name in ("y", "z", "grad"):
        arr = getattr(state, name)
        for i in range(state.n):
            lines.append(f"{name} {i} " + " ".join(repr(float(v)) for v in arr[i]))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def load_checkpoint(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {CHECKPOINT_SCHEMA}":
        raise ValueError(f"{path}: not a {CHECKPOINT_SCHEMA} file")
    fields = {}
    rows = {"y": {}, "z": {}, "grad": {}}
    for ln in lines[1:]:
        parts = ln.split()
        if not parts:
            continue
        key = parts[0]
        if key in rows:
            rows[key][int(parts[1])] = [float(v) for v in parts[2:]]
        else:
            fields[key] = parts[1:]
    n, m = int(fields["n"][0]), int(fields["m"][0])
    x = np.array([float(v) for v in fields["x"]])

    def stack(name):
        if n and m == 0:
            return np.zeros((n, 0))
        return np.array([rows[name][i] for i in range(n)]).reshape(n, m)

    return SystemState(x=x, y=stack("y"), z=stack("z"), grad=stack("grad"),
                       step=int(fields["step"][0]), b=float(fields["b"][0]))


# --------------------------------------------------------------------------
# orchestration


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


@dataclass
class RunResult:
    exit_code: int
    message: str = ""
    out_dir: Path = None
    trace: object = None
    instance: object = None
    references: object = None
    files: dict = field(default_factory=dict)


def run_experiment(cfg, out_dir, base_dir=None, per_node=False):
    """Build, run and write artifacts; never raises for the documented failure modes.

    Returns a ``RunResult`` whose ``exit_code`` is 0 on success, 2 for a
    configuration error, 3 when the initial allocation cannot be feasible and
    4 when the state diverges (the partial trace is still written).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        inst = build_instance(cfg, base_dir)
        solver = inst.solver_config()
    except ConfigError as exc:
        return RunResult(EXIT_CONFIG, str(exc), out)
    except ValueError as exc:
        return RunResult(EXIT_CONFIG, f"invalid configuration: {exc}", out)

    bundle = inst.bundle
    if bundle.cpu is not None and inst.b > bundle.cpu.available * (1 + 1e-12):
        return RunResult(EXIT_INFEASIBLE, f"total demand b={inst.b} exceeds available capacity "
                         f"{bundle.cpu.available}", out, instance=inst)

    refs = compute_references(bundle, inst.b)
    recorder = make_recorder(bundle, refs, solver.dt, per_node=per_node)
    files = {name: out / name for name in ("trace.csv", "metadata.json", "summary.json", "checkpoint.txt")}

    status, message = EXIT_OK, "ok"
    t0 = time.perf_counter()
    try:
        trace = run(bundle, inst.schedule, solver, inst.b, recorder=recorder, per_node=per_node)
    except InfeasibleInitError as exc:
        return RunResult(EXIT_INFEASIBLE, str(exc), out, instance=inst)
    except DivergenceError as exc:
        trace = exc.trace
        status, message = EXIT_DIVERGED, str(exc)
    wall = time.perf_counter() - t0

    files["trace.csv"].write_text(format_trace(trace, bundle.n, per_node))
    if trace.state is not None and status == EXIT_OK:
        save_checkpoint(trace.state, files["checkpoint.txt"])
    else:
        files.pop("checkpoint.txt")
    (out / "config.ini").write_text(format_config(cfg))

    _write_json(files["metadata.json"], {
        "version": __version__,
        "backend": backend_name(),
        "threads": THREADS,
        "config": cfg.to_dict(),
        "alpha": inst.alpha,
        "alpha_bar": inst.alpha_bar,
        "lambda2_abs": inst.lambda2,
        "lipschitz": inst.lipschitz,
        "b": inst.b,
        "graphs": len(inst.schedule.graphs),
        "notes": inst.notes,
        "reference": {
            "y_star": refs.y_star,
            "F_star": refs.F_star,
            "G_star": refs.G_star,
            "x_star_source": "equal-marginal root with penalties" if bundle.penalty is not None else "closed form",
        },
        "wall_time_s": wall,
    })

    last = trace.records[-1]
    summary = {
        "status": status,
        "message": message,
        "steps_run": last.step,
        "stopped_early": trace.stopped_early,
        "records": len(trace.records),
        "final": {
            "feasibility_gap": last.feasibility_gap,
            "consensus_gap": last.consensus_gap,
            "total_cost": last.total_cost,
            "cost_residual": last.cost_residual,
            "lyapunov": last.lyapunov,
        },
        "max_feasibility_gap": max(r.feasibility_gap for r in trace.records),
    }
    if trace.state is not None and status == EXIT_OK:
        summary["y_mean"] = trace.state.y.mean(axis=0) if bundle.m else []
        summary["x_final"] = trace.state.x
    if bundle.cpu is not None:
        bal, opt, ratio = compare_baseline(bundle.cpu, inst.b)
        summary["baseline"] = {"cost_balancing": bal, "cost_sum_preserving": opt, "ratio": ratio}
    _write_json(files["summary.json"], summary)
    return RunResult(status, message, out, trace, inst, refs, files)
