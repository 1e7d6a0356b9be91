"""Turn an ``ExperimentConfig`` into a concrete problem instance."""

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import alpha_max
from ..dynamics import SolverConfig
from ..objectives import BoxPenaltySpec, CpuCostSpec, MlObjectiveSpec, ObjectiveBundle, lipschitz_estimate
from ..topology import NetworkSchedule, WeightedGraph, algebraic_connectivity, build_exponential, erdos_renyi_schedule, laplacian
from .config import ConfigError
from .data import generate_dataset, read_csv, shard_dataset

N_RANDOM_PROBES = 5


class StepSizeWarning(UserWarning):
    pass


@dataclass
class Instance:
    config: object
    schedule: NetworkSchedule
    bundle: ObjectiveBundle
    b: float
    lambda2: float
    lipschitz: float
    alpha_bar: float
    alpha: float
    dataset: object = None
    notes: list = field(default_factory=list)

    def solver_config(self):
        s = self.config.solver
        return SolverConfig(
            alpha=self.alpha,
            dt=s.dt,
            steps=s.steps,
            quantizer=self.config.quantizer.to_quantizer(),
            z_init=s.z_init,
            x_init=s.x_init,
            seed=s.seed,
            record_every=s.record_every,
            early_stop=s.early_stop,
            consensus_tol=s.consensus_tol,
            gradient_tol=s.gradient_tol,
            marginal_tol=s.marginal_tol,
        )


def build_schedule(cfg, base_dir=None):
    t = cfg.topology
    if t.kind == "erdos-renyi":
        return erdos_renyi_schedule(t.n, t.p, t.graph_pool_size, t.seed, t.switch_period, t.switch_mode)
    if t.kind == "exponential":
        return NetworkSchedule((build_exponential(t.n),), switch_period=t.switch_period)
    graphs = []
    for name in t.graph_files:
        path = Path(name)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            g = WeightedGraph.load(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[topology] graph_files: cannot load {path}: {exc}") from None
        if g.n != t.n:
            raise ConfigError(f"[topology] graph_files: {path} has {g.n} nodes, expected n={t.n}")
        graphs.append(g)
    try:
        return NetworkSchedule(tuple(graphs), switch_period=t.switch_period, mode=t.switch_mode, seed=t.seed)
    except ValueError as exc:
        raise ConfigError(f"[topology] graph_files: {exc}") from None


def build_cpu(cfg, n):
    """Capacities and demands from explicit lists or seeded uniform draws."""
    c = cfg.cpu
    if not c.enabled:
        return None
    if c.kappa_max:
        kappa = np.array(c.kappa_max)
    else:
        kappa = np.random.default_rng([c.seed, 0]).uniform(*c.kappa_range, size=n)
    if c.demand:
        demand = np.array(c.demand)
    else:
        demand = np.random.default_rng([c.seed, 1]).uniform(*c.demand_range, size=n)
    used = np.array(c.used) if c.used else np.zeros(n)
    avail = float(np.sum(kappa - used))
    total = c.b if c.b is not None else c.load_fraction * avail
    return CpuCostSpec(kappa, demand, used, total)


def load_dataset(cfg, n, base_dir=None):
    m = cfg.ml
    if m.kind == "none":
        return None
    if m.dataset is not None:
        path = Path(m.dataset)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            return read_csv(path, m.kind)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[ml] dataset: {exc}") from None
    params = {
        "n_points": m.n_points,
        "dim": m.dim,
        "separation": m.separation,
        "margin": m.margin,
        "noise": m.noise,
        "coef_range": m.coef_range,
        "n_nodes": n,
    }
    return generate_dataset(m.kind, params, seed=m.data_seed)


def build_bundle(cfg, n, dataset, cpu):
    m = cfg.ml
    p = cfg.penalty
    pen = BoxPenaltySpec(p.lower, p.upper, p.epsilon, p.sigma, p.variant) if (p.enabled and cpu is not None) else None
    ml = None
    if dataset is not None:
        shards = shard_dataset(dataset, n, m.shard_fraction, seed=m.data_seed)
        ml = [MlObjectiveSpec(m.kind, dataset.features[s], dataset.labels[s], C=m.C, mu=m.mu, theta=m.theta)
              for s in shards]
        if m.m is not None and ml[0].dim != m.m:
            raise ConfigError(f"[ml] m: is {m.m} but the dataset gives {ml[0].dim} parameters")
    return ObjectiveBundle(n, cpu=cpu, penalty=pen, ml=ml)


def probe_points(m, seed):
    """Points where Hessians are sampled for the Lipschitz estimate."""
    pts = [np.zeros(m), np.ones(m), -np.ones(m)]
    rng = np.random.default_rng([seed, 3])
    pts += list(rng.uniform(-2.0, 2.0, size=(N_RANDOM_PROBES, m)))
    return pts


def build_instance(cfg, base_dir=None):
    """Schedule, objectives, spectral constants and the resolved step size."""
    schedule = build_schedule(cfg, base_dir)
    n = schedule.n
    dataset = load_dataset(cfg, n, base_dir)
    cpu = build_cpu(cfg, n)
    bundle = build_bundle(cfg, n, dataset, cpu)
    lam2 = min(algebraic_connectivity(laplacian(g)) for g in schedule.graphs)
    rho = cfg.quantizer.rho if cfg.quantizer.enabled else 0.0
    notes = []
    if bundle.m:
        L = lipschitz_estimate(bundle.ml, probe_points(bundle.m, cfg.solver.seed))
        bar = alpha_max(lam2, L, rho) if L > 0 else math.inf
    else:
        L, bar = math.nan, math.nan
    alpha = cfg.solver.alpha
    if alpha == "auto":
        if not math.isfinite(bar):
            alpha = 1.0
            notes.append("alpha=auto without an ML objective: alpha has no effect, set to 1")
        else:
            alpha = 0.5 * bar
    elif math.isfinite(bar) and alpha > bar:
        msg = f"alpha={alpha} exceeds the admissible bound {bar:.6g}; the bound is sufficient, not necessary"
        warnings.warn(msg, StepSizeWarning, stacklevel=2)
        notes.append(msg)
    b = cpu.total if cpu is not None else 0.0
    return Instance(cfg, schedule, bundle, b, lam2, L, bar, float(alpha), dataset, notes)
