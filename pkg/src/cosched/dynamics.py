"""Networked state and the explicit-Euler co-optimisation dynamics.

One synchronous round updates, for every node ``i`` and the active graph,

    x_i += dt * sum_j w_ij (Q(d_j) - Q(d_i)),   d_i = f_i'(x_i) + penalty'(x_i)
    y_i += dt * (sum_j w_ij (Q(y_j) - Q(y_i)) - alpha z_i)
    z_i += dt * sum_j w_ij (Q(z_j) - Q(z_i)) + grad g_i(y_i_new) - grad g_i(y_i_old)

with every message computed from the pre-step state. ``Q`` is the log
quantizer, or the identity in linear mode.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .quantize import QuantizerConfig

Z_INIT_CHOICES = ("local-gradient", "zero")
X_INIT_CHOICES = ("equal", "random")


class DivergenceError(FloatingPointError):
    """A state entry became non-finite; ``trace`` holds the records so far."""

    def __init__(self, step, node, trace=None):
        super().__init__(f"non-finite state at step {step}, node {node}")
        self.step = step
        self.node = node
        self.trace = trace


class InfeasibleInitError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.05
    dt: float = 1e-3
    steps: int = 1000
    quantizer: QuantizerConfig = QuantizerConfig()
    z_init: str = "local-gradient"
    x_init: str = "equal"
    seed: int = 0
    record_every: int = 10
    early_stop: bool = True
    consensus_tol: float = 1e-6
    gradient_tol: float = 1e-6
    marginal_tol: float = 1e-6

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.z_init not in Z_INIT_CHOICES:
            raise ValueError(f"z_init must be one of {Z_INIT_CHOICES}, got {self.z_init!r}")
        if self.x_init not in X_INIT_CHOICES:
            raise ValueError(f"x_init must be one of {X_INIT_CHOICES}, got {self.x_init!r}")

    @property
    def mode(self):
        return "quantized" if self.quantizer.enabled else "linear"


def euler_stable_dt(schedule):
    """Largest ``dt`` passing the ``dt * 2 * max|L| row sum < 1`` heuristic."""
    worst = max(float(np.max(g.weights.sum(axis=1))) for g in schedule.graphs)
    return math.inf if worst == 0 else 1.0 / (4.0 * worst)


@dataclass(eq=False)
class SystemState:
    """Stacked node states: ``x`` (n,), ``y`` and ``z`` (n, m).

    ``grad`` caches every node's gradient at the current ``y``.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    grad: np.ndarray
    step: int = 0
    b: float = 0.0

    @property
    def n(self):
        return self.x.size

    @property
    def m(self):
        return self.y.shape[1]

    def copy(self):
        return SystemState(self.x.copy(), self.y.copy(), self.z.copy(), self.grad.copy(), self.step, self.b)


@dataclass
class TraceRecord:
    step: int
    time: float
    feasibility_gap: float
    consensus_gap: float
    total_cost: float
    cost_residual: float = math.nan
    lyapunov: float = math.nan
    x: np.ndarray = None


@dataclass
class Trace:
    records: list = field(default_factory=list)
    header: dict = field(default_factory=dict)
    state: SystemState = None
    stopped_early: bool = False

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def init_state(bundle, b, config):
    """Feasible start: ``sum x = b``, random ``y`` in [-1, 1], ``z`` per config."""
    n, m = bundle.n, bundle.m
    b = float(b)
    if bundle.cpu is not None and b > bundle.cpu.available * (1 + 1e-12):
        raise InfeasibleInitError(
            f"total demand b={b} exceeds available capacity {bundle.cpu.available}"
        )
    if config.x_init == "equal" or n == 1:
        x = np.full(n, b / n)
    else:
        x = np.random.default_rng([config.seed, 2]).dirichlet(np.ones(n)) * b
    x[-1] = b - math.fsum(x[:-1])
    y = np.random.default_rng([config.seed, 1]).uniform(-1.0, 1.0, size=(n, m))
    grad = bundle.ml_grads(y)
    z = grad.copy() if config.z_init == "local-gradient" else np.zeros((n, m))
    return SystemState(x=x, y=y, z=z, grad=grad, step=0, b=b)


def _first_bad_node(state):
    bad = ~np.isfinite(state.x)
    if state.m:
        bad |= ~np.all(np.isfinite(state.y), axis=1) | ~np.all(np.isfinite(state.z), axis=1)
    return int(np.argmax(bad))


def step(state, bundle, graph, config):
    """One synchronous Euler round on ``graph``; returns a new state."""
    new = state.copy()
    zinc = np.empty_like(new.z)
    rho = config.quantizer.rho if config.quantizer.enabled else 1.0
    _kernels.advance(new.x, new.y, new.z, np.ascontiguousarray(graph.weights), bundle.cpu_tuple(),
                     config.dt, config.alpha, rho, config.quantizer.enabled, zinc)
    if new.m:
        g_new = bundle.ml_grads(new.y)
        new.z += zinc
        new.z += g_new - state.grad
        new.grad = g_new
    new.step = state.step + 1
    if not (np.all(np.isfinite(new.x)) and np.all(np.isfinite(new.z)) and np.all(np.isfinite(new.y))):
        raise DivergenceError(new.step, _first_bad_node(new))
    return new


def consensus_gap(y):
    y = np.atleast_2d(y)
    if y.shape[1] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(y - y.mean(axis=0), axis=1)))


def basic_record(state, bundle, dt, per_node=False):
    """Record without reference optimum (residual and Lyapunov left NaN)."""
    total = float(np.sum(bundle.cpu_costs(state.x)) + np.sum(bundle.ml_values(state.y)))
    return TraceRecord(
        step=state.step,
        time=state.step * dt,
        feasibility_gap=abs(math.fsum(state.x) - state.b),
        consensus_gap=consensus_gap(state.y),
        total_cost=total,
        x=state.x.copy() if per_node else None,
    )


def _converged(state, bundle, config):
    if consensus_gap(state.y) >= config.consensus_tol:
        return False
    if state.m and np.linalg.norm(state.grad.sum(axis=0)) >= config.gradient_tol:
        return False
    if bundle.cpu is not None:
        d = bundle.marginals(state.x)
        if np.ptp(d) >= config.marginal_tol:
            return False
    return True


def run(bundle, schedule, config, b, hooks=(), recorder=None, per_node=False):
    """Iterate the dynamics for ``config.steps`` rounds or until converged.

    ``recorder(state) -> TraceRecord`` is called every ``record_every`` steps
    (and on the initial and final state); ``hooks`` are called with the live
    state after every step. On divergence the raised ``DivergenceError``
    carries the partial trace.
    """
    if schedule.n != bundle.n:
        raise ValueError(f"schedule has {schedule.n} nodes, bundle has {bundle.n}")
    if recorder is None:
        def recorder(s):
            return basic_record(s, bundle, config.dt, per_node)

    state = init_state(bundle, b, config)
    trace = Trace(header={
        "mode": config.mode,
        "z_init": config.z_init,
        "x_init": config.x_init,
        "alpha": config.alpha,
        "dt": config.dt,
        "rho": config.quantizer.rho if config.quantizer.enabled else 0.0,
    })
    trace.records.append(recorder(state))
    for hook in hooks:
        hook(state)

    weights = [np.ascontiguousarray(g.weights) for g in schedule.graphs]
    cpu = bundle.cpu_tuple()
    quantized = config.quantizer.enabled
    rho = config.quantizer.rho if quantized else 1.0
    dt, alpha = config.dt, config.alpha
    m = bundle.m
    x, Y, Z = state.x, state.y, state.z
    G = state.grad
    G_new = np.empty_like(G)
    dG = np.empty_like(G)
    zinc = np.empty_like(Z)
    last_recorded = 0

    for k in range(config.steps):
        _kernels.advance(x, Y, Z, weights[schedule.index_at(k)], cpu, dt, alpha, rho, quantized, zinc)
        if m:
            bundle.ml_grads(Y, out=G_new)
            np.subtract(G_new, G, out=dG)
            Z += zinc
            Z += dG
            G, G_new = G_new, G
            state.grad = G
        state.step = k + 1
        if not (np.isfinite(x).all() and np.isfinite(Z).all()):
            trace.state = state
            raise DivergenceError(state.step, _first_bad_node(state), trace)
        for hook in hooks:
            hook(state)
        if state.step % config.record_every == 0:
            trace.records.append(recorder(state))
            last_recorded = state.step
            if config.early_stop and _converged(state, bundle, config):
                trace.stopped_early = True
                break

    if last_recorded != state.step:
        trace.records.append(recorder(state))
    trace.state = state
    return trace
