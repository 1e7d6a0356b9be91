"""Local objectives: CPU allocation cost, box penalty and the ML losses.

The single-node functions here (``ml_loss``, ``ml_hessian`` ...) are the
reference implementations. ``ObjectiveBundle`` packs every node's shard so the
dynamics can evaluate all nodes at once through ``_kernels``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

ML_KINDS = ("regression", "svm", "logistic", "nonconvex")
LIPSCHITZ_SAFETY = 1.5


class ShapeError(ValueError):
    pass


# --------------------------------------------------------------------------
# CPU scheduling cost


@dataclass(frozen=True, eq=False)
class CpuCostSpec:
    """Per-node capacities, demands and already-used cycles plus total demand."""

    kappa_max: np.ndarray
    demand: np.ndarray
    used: np.ndarray = None
    total: float = 0.0

    def __post_init__(self):
        kappa = np.asarray(self.kappa_max, dtype=float).ravel()
        demand = np.asarray(self.demand, dtype=float).ravel()
        used = np.zeros_like(kappa) if self.used is None else np.asarray(self.used, dtype=float).ravel()
        if not (kappa.shape == demand.shape == used.shape):
            raise ValueError(
                f"kappa_max, demand and used must have equal length, got {kappa.size}, {demand.size}, {used.size}"
            )
        if np.any(kappa <= 0):
            raise ValueError("kappa_max must be strictly positive")
        if np.any(used < 0):
            raise ValueError("used cycles must be nonnegative")
        for arr in (kappa, demand, used):
            arr.setflags(write=False)
        object.__setattr__(self, "kappa_max", kappa)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "used", used)
        object.__setattr__(self, "total", float(self.total))

    @property
    def n(self):
        return self.kappa_max.size

    @property
    def available(self):
        return float(np.sum(self.kappa_max - self.used))

    def __eq__(self, other):
        if not isinstance(other, CpuCostSpec):
            return NotImplemented
        return (
            np.array_equal(self.kappa_max, other.kappa_max)
            and np.array_equal(self.demand, other.demand)
            and np.array_equal(self.used, other.used)
            and self.total == other.total
        )


def cpu_cost(x, spec, i):
    """Value and derivative of ``(x - b_i)^2 / (2 kappa_i)``."""
    k = spec.kappa_max[i]
    r = x - spec.demand[i]
    return r * r / (2.0 * k), r / k


def cpu_cost_all(x, spec):
    r = np.asarray(x, dtype=float) - spec.demand
    return r * r / (2.0 * spec.kappa_max), r / spec.kappa_max


def closed_form_kappa(alphas, demands):
    """Minimiser of ``sum_i alpha_i/2 (k - b_i)^2`` over a common scalar ``k``."""
    alphas = np.asarray(alphas, dtype=float)
    demands = np.asarray(demands, dtype=float)
    if np.any(alphas <= 0):
        raise ValueError("weights must be strictly positive")
    return float(np.dot(alphas, demands) / np.sum(alphas))


def balancing_workload(spec):
    """Allocation that loads every node to the same fraction of its capacity."""
    kappa_tot = float(np.sum(spec.kappa_max))
    if kappa_tot <= 0:
        raise ValueError("total capacity must be positive")
    u_tot = float(np.sum(spec.used))
    return (spec.total + u_tot) / kappa_tot * spec.kappa_max - spec.used


# --------------------------------------------------------------------------
# box penalty


@dataclass(frozen=True)
class BoxPenaltySpec:
    lower: float = 0.0
    upper: float = 700.0
    epsilon: float = 1.0
    sigma: float = 2.0
    variant: str = "power"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"box needs lower < upper, got [{self.lower}, {self.upper}]")
        if self.epsilon <= 0:
            raise ValueError(f"penalty weight epsilon must be positive, got {self.epsilon}")
        if self.variant == "power":
            if self.sigma < 2 or float(self.sigma) != int(self.sigma):
                raise ValueError(f"power penalty needs an integer sigma >= 2, got {self.sigma}")
        elif self.variant == "softplus":
            if self.sigma <= 0:
                raise ValueError(f"softplus penalty needs sigma > 0, got {self.sigma}")
        else:
            raise ValueError(f"unknown penalty variant {self.variant!r}")

    @property
    def code(self):
        return _kernels.PEN_POWER if self.variant == "power" else _kernels.PEN_SOFTPLUS


def _plus(u, sigma, variant):
    if variant == "power":
        pos = np.maximum(u, 0.0)
        return pos**sigma, sigma * pos ** (sigma - 1)
    su = sigma * u
    value = (np.maximum(su, 0.0) + np.log1p(np.exp(-np.abs(su)))) / sigma
    e = np.exp(-np.abs(su))
    grad = np.where(su >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return value, grad


def penalty(x, spec):
    """Value and derivative of ``eps * ([x - upper]^+ + [lower - x]^+)``."""
    x = np.asarray(x, dtype=float)
    vu, gu = _plus(x - spec.upper, spec.sigma, spec.variant)
    vl, gl = _plus(spec.lower - x, spec.sigma, spec.variant)
    value = spec.epsilon * (vu + vl)
    grad = spec.epsilon * (gu - gl)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


# --------------------------------------------------------------------------
# ML objectives


@dataclass(frozen=True, eq=False)
class MlObjectiveSpec:
    """One node's ML loss and its data shard.

    For ``regression``/``svm``/``logistic`` the rows of ``features`` are
    samples and the parameter vector is ``[w; bias]``. For ``nonconvex`` each
    row is a coefficient pair ``(a_j, b_j)`` and the parameter is scalar.
    """

    kind: str
    features: np.ndarray
    labels: np.ndarray = None
    C: float = 5.0
    mu: float = 2.0
    theta: float = 0.01

    def __post_init__(self):
        if self.kind not in ML_KINDS:
            raise ValueError(f"unknown ML objective kind {self.kind!r}; expected one of {ML_KINDS}")
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1) if self.kind != "nonconvex" else feats.reshape(-1, 2)
        if self.kind == "nonconvex" and feats.shape[1] != 2:
            raise ShapeError(f"nonconvex coefficients need 2 columns (a, b), got {feats.shape[1]}")
        labels = np.zeros(feats.shape[0]) if self.labels is None else np.asarray(self.labels, dtype=float).ravel()
        if labels.size != feats.shape[0]:
            raise ShapeError(f"{feats.shape[0]} samples but {labels.size} labels")
        if self.kind == "svm" and (self.C < 0 or self.mu <= 0):
            raise ValueError("svm needs C >= 0 and mu > 0")
        if self.kind == "logistic" and self.theta < 0:
            raise ValueError("logistic regulariser theta must be nonnegative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return 1 if self.kind == "nonconvex" else self.features.shape[1] + 1

    @property
    def size(self):
        return self.features.shape[0]


def _check_y(y, spec):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.dim:
        raise ShapeError(f"{spec.kind} parameter must have dimension {spec.dim}, got {y.size}")
    return y


def _augmented(spec, sign):
    # rows (chi, sign): d(score)/dy for score = w.chi + sign * bias
    return np.hstack([spec.features, np.full((spec.size, 1), sign)])


def _softplus(u):
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _sigmoid(u):
    e = np.exp(-np.abs(u))
    return np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def ml_loss(y, spec):
    """Local loss value and exact gradient at parameter ``y``."""
    y = _check_y(y, spec)
    if spec.size == 0:
        return 0.0, np.zeros_like(y)
    if spec.kind == "nonconvex":
        a, b = spec.features[:, 0].sum(), spec.features[:, 1].sum()
        N = spec.size
        t = y[0]
        value = N * (2 * t * t + 3 * math.sin(t) ** 2) + a * math.cos(t) + b * t
        grad = N * (4 * t + 3 * math.sin(2 * t)) - a * math.sin(t) + b
        return float(value), np.array([grad])
    w = y[:-1]
    if spec.kind == "regression":
        A = _augmented(spec, -1.0)
        r = A @ y - spec.labels
        return float(r @ r), 2.0 * A.T @ r
    if spec.kind == "svm":
        A = _augmented(spec, -1.0)
        theta = 1.0 - spec.labels * (A @ y)
        value = w @ w + spec.C * np.sum(_softplus(spec.mu * theta)) / spec.mu
        s = _sigmoid(spec.mu * theta)
        grad = -spec.C * A.T @ (s * spec.labels)
        grad[:-1] += 2.0 * w
        return float(value), grad
    # logistic
    A = _augmented(spec, 1.0)
    z = A @ y
    margin = -z * spec.labels
    value = np.mean(_softplus(margin)) + 0.5 * spec.theta * (w @ w)
    grad = A.T @ (-spec.labels * _sigmoid(margin)) / spec.size
    grad[:-1] += spec.theta * w
    return float(value), grad


def ml_hessian(y, spec):
    """Exact Hessian of the local loss at ``y``."""
    y = _check_y(y, spec)
    m = spec.dim
    if spec.size == 0:
        return np.zeros((m, m))
    if spec.kind == "nonconvex":
        a = spec.features[:, 0].sum()
        t = y[0]
        return np.array([[spec.size * (4 + 6 * math.cos(2 * t)) - a * math.cos(t)]])
    if spec.kind == "regression":
        A = _augmented(spec, -1.0)
        return 2.0 * A.T @ A
    if spec.kind == "svm":
        A = _augmented(spec, -1.0)
        s = _sigmoid(spec.mu * (1.0 - spec.labels * (A @ y)))
        H = spec.C * spec.mu * (A.T * (s * (1 - s))) @ A
        H[np.arange(m - 1), np.arange(m - 1)] += 2.0
        return H
    A = _augmented(spec, 1.0)
    s = _sigmoid(-(A @ y) * spec.labels)
    H = (A.T * (s * (1 - s))) @ A / spec.size
    H[np.arange(m - 1), np.arange(m - 1)] += spec.theta
    return H


def lipschitz_estimate(specs, probe_points, safety=LIPSCHITZ_SAFETY):
    """Largest Hessian eigenvalue over nodes and probes, times ``safety``."""
    probes = list(probe_points)
    if not probes:
        raise ValueError("need at least one probe point")
    top = 0.0
    for spec in specs:
        if spec.size == 0:
            continue
        for y in probes:
            top = max(top, float(np.linalg.eigvalsh(ml_hessian(y, spec))[-1]))
    return safety * top


def check_assumption1(specs, Y):
    """Whether the summed Hessian at the stacked parameters is positive definite.

    Returns ``(ok, smallest_eigenvalue)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] != len(specs):
        raise ShapeError(f"{len(specs)} nodes but {Y.shape[0]} parameter rows")
    total = sum(ml_hessian(Y[i], spec) for i, spec in enumerate(specs))
    lam = float(np.linalg.eigvalsh(total)[0])
    return lam > 0, lam


# --------------------------------------------------------------------------
# stacked bundle for the dynamics


@dataclass(eq=False)
class ObjectiveBundle:
    """Every node's scheduling cost, box penalty and ML loss.

    ``cpu=None`` freezes the scheduling part; ``ml=None`` (``m == 0``) runs
    scheduling alone.
    """

    n: int
    cpu: CpuCostSpec = None
    penalty: BoxPenaltySpec = None
    ml: tuple = None
    packed: object = field(init=False, default=None)

    def __post_init__(self):
        if self.cpu is not None and self.cpu.n != self.n:
            raise ShapeError(f"cpu spec covers {self.cpu.n} nodes, expected {self.n}")
        if self.ml is not None:
            self.ml = tuple(self.ml)
            if len(self.ml) != self.n:
                raise ShapeError(f"{len(self.ml)} ML specs for {self.n} nodes")
            kinds = {s.kind for s in self.ml}
            dims = {s.dim for s in self.ml}
            if len(kinds) != 1 or len(dims) != 1:
                raise ShapeError("all nodes must share one ML kind and parameter dimension")
            first = self.ml[0]
            self.packed = _kernels.PackedShards(
                [s.features for s in self.ml],
                [s.labels for s in self.ml],
                first.features.shape[1],
                nonconvex=first.kind == "nonconvex",
            )

    @property
    def m(self):
        return 0 if self.ml is None else self.ml[0].dim

    @property
    def kind(self):
        return None if self.ml is None else self.ml[0].kind

    @property
    def kind_code(self):
        return 0 if self.ml is None else _kernels.KIND_CODES[self.kind]

    @property
    def ml_params(self):
        s = self.ml[0]
        return (float(s.C), float(s.mu), float(s.theta))

    def cpu_tuple(self):
        if self.cpu is None:
            ones = np.ones(self.n)
            return (False, ones, np.zeros(self.n), 0.0, 2.0, 0.0, 1.0, _kernels.PEN_NONE)
        p = self.penalty
        if p is None:
            return (True, self.cpu.kappa_max, self.cpu.demand, 0.0, 2.0, 0.0, 1.0, _kernels.PEN_NONE)
        return (True, self.cpu.kappa_max, self.cpu.demand, float(p.epsilon), float(p.sigma),
                float(p.lower), float(p.upper), p.code)

    def marginals(self, x):
        """Per-node ``d/dx (f_i + f_i^box)``."""
        if self.cpu is None:
            return np.zeros(self.n)
        return _kernels.marginals(np.asarray(x, dtype=float), self.cpu_tuple())

    def cpu_costs(self, x):
        """Per-node ``f_i(x_i) + f_i^box(x_i)``."""
        if self.cpu is None:
            return np.zeros(self.n)
        values, _ = cpu_cost_all(x, self.cpu)
        if self.penalty is not None:
            values = values + penalty(np.asarray(x, dtype=float), self.penalty)[0]
        return values

    def ml_grads(self, Y, out=None):
        if out is None:
            out = np.empty((self.n, self.m))
        if self.m:
            _kernels.ml_grad(self.kind_code, Y, self.packed, self.ml_params, out)
        return out

    def ml_values(self, Y):
        if not self.m:
            return np.zeros(self.n)
        return _kernels.ml_values(self.kind_code, np.ascontiguousarray(Y, dtype=float), self.packed, self.ml_params)

    def hessians(self, Y):
        return [ml_hessian(Y[i], s) for i, s in enumerate(self.ml)]
