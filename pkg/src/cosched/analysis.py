"""Numerical checks on the solver: spectra, step-size bound, optimality, Lyapunov."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import brentq

from .dynamics import TraceRecord, consensus_gap
from .objectives import cpu_cost_all, balancing_workload

ZERO_TOL = 1e-8


# --------------------------------------------------------------------------
# system matrix and spectrum


def system_matrix(lap, H_blocks, alpha, q_gains=1.0):
    """Linearised ``(y, z)`` system matrix for the tracking dynamics.

    ``q_gains`` scales the columns of the consensus block: a scalar, one gain
    per node, or one per entry of the stacked ``mn`` vector.
    """
    lap = np.asarray(lap, dtype=float)
    n = lap.shape[0]
    H_blocks = [np.atleast_2d(np.asarray(h, dtype=float)) for h in H_blocks]
    if len(H_blocks) != n:
        raise ValueError(f"need {n} Hessian blocks, got {len(H_blocks)}")
    m = H_blocks[0].shape[0]
    if any(h.shape != (m, m) for h in H_blocks):
        raise ValueError("Hessian blocks must all be m x m")
    gains = np.asarray(q_gains, dtype=float)
    if gains.ndim == 0:
        gains = np.full(n * m, float(gains))
    elif gains.size == n:
        gains = np.repeat(gains, m)
    elif gains.size != n * m:
        raise ValueError(f"q_gains must be scalar, length {n} or length {n * m}, got {gains.size}")
    Lq = np.kron(lap, np.eye(m)) * gains[None, :]
    H = block_diag(*H_blocks)
    eye = np.eye(n * m)
    return np.block([[Lq, -alpha * eye], [H @ Lq, Lq - alpha * H]])


def spectral_check(A, m=1, tol=ZERO_TOL):
    """Count near-zero eigenvalues of ``A``; return it with the largest other real part."""
    ev = np.linalg.eigvals(np.asarray(A, dtype=float))
    zero = np.abs(ev) < tol
    rest = ev[~zero].real
    return int(zero.sum()), float(rest.max()) if rest.size else -math.inf


def alpha_max(lambda2_abs, lipschitz, rho=0.0):
    """Admissible gradient-tracking rate bound ``|lambda_2| / (L (1 + rho/2))``."""
    if lipschitz <= 0:
        raise ValueError(f"Lipschitz constant must be positive, got {lipschitz}")
    if lambda2_abs < 0 or rho < 0:
        raise ValueError("lambda2 and rho must be nonnegative")
    return lambda2_abs / (lipschitz * (1.0 + rho / 2.0))


# --------------------------------------------------------------------------
# scheduling optimum


def kkt_oracle(cpu, b=None):
    """Closed-form minimiser of ``sum (x_i - b_i)^2 / (2 kappa_i)`` s.t. ``sum x = b``."""
    b = cpu.total if b is None else float(b)
    ksum = float(np.sum(cpu.kappa_max))
    if ksum == 0:
        raise ValueError("sum of capacities is zero")
    nu = (b - float(np.sum(cpu.demand))) / ksum
    return cpu.demand + cpu.kappa_max * nu


def _invert_marginal(bundle, nu):
    """Per-node ``x`` with ``marginal_i(x) = nu`` (marginals are strictly increasing)."""
    cpu = bundle.cpu
    centre = cpu.demand + cpu.kappa_max * nu
    half = np.ones(bundle.n)
    for _ in range(200):
        lo, hi = centre - half, centre + half
        bad = (bundle.marginals(lo) > nu) | (bundle.marginals(hi) < nu)
        if not bad.any():
            break
        half = np.where(bad, 2 * half, half)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = bundle.marginals(mid) < nu
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def scheduling_optimum(bundle, b):
    """Minimiser of the penalised scheduling cost subject to ``sum x = b``."""
    if bundle.cpu is None:
        raise ValueError("bundle has no scheduling part")
    if bundle.penalty is None:
        return kkt_oracle(bundle.cpu, b)
    x0 = kkt_oracle(bundle.cpu, b)
    nu0 = float(np.mean(bundle.marginals(x0)))

    def excess(nu):
        return math.fsum(_invert_marginal(bundle, nu)) - b

    width = 1.0
    lo, hi = nu0 - width, nu0 + width
    while excess(lo) > 0:
        width *= 2
        lo = nu0 - width
    while excess(hi) < 0:
        width *= 2
        hi = nu0 + width
    nu = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    x = _invert_marginal(bundle, nu)
    return x + (b - math.fsum(x)) / bundle.n


# --------------------------------------------------------------------------
# ML reference optimum


def ml_reference(bundle, y0=None, tol=1e-10, max_iter=200):
    """Consensus minimiser of ``sum_i g_i(y)`` by damped Newton."""
    n, m = bundle.n, bundle.m
    if m == 0:
        return np.zeros(0)

    def total(y):
        return float(np.sum(bundle.ml_values(np.tile(y, (n, 1)))))

    def grad(y):
        return bundle.ml_grads(np.ascontiguousarray(np.tile(y, (n, 1)))).sum(axis=0)

    def hess(y):
        return sum(bundle.hessians(np.tile(y, (n, 1))))

    if y0 is None:
        if m == 1:
            grid = np.linspace(-5.0, 5.0, 2001)
            vals = [total(np.array([t])) for t in grid]
            y = np.array([grid[int(np.argmin(vals))]])
        else:
            y = np.zeros(m)
    else:
        y = np.asarray(y0, dtype=float).copy()

    f = total(y)
    for _ in range(max_iter):
        g = grad(y)
        gn = float(np.linalg.norm(g))
        if gn <= tol * max(1.0, abs(f)):
            break
        H = hess(y)
        lam = 0.0
        while True:
            try:
                direction = -np.linalg.solve(H + lam * np.eye(m), g)
                if direction @ g < 0:
                    break
            except np.linalg.LinAlgError:
                pass
            lam = max(2 * lam, 1e-8 * max(1.0, np.abs(H).max()))
        t = 1.0
        while True:
            cand = y + t * direction
            fc = total(cand)
            if fc <= f + 1e-4 * t * (direction @ g) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            break
        y, f = cand, fc
    return y


@dataclass(frozen=True, eq=False)
class References:
    x_star: np.ndarray
    y_star: np.ndarray
    F_star: float
    G_star: float


def compute_references(bundle, b):
    if bundle.cpu is not None:
        x_star = scheduling_optimum(bundle, b)
        F_star = float(np.sum(bundle.cpu_costs(x_star)))
    else:
        x_star, F_star = None, 0.0
    y_star = ml_reference(bundle)
    G_star = float(np.sum(bundle.ml_values(np.tile(y_star, (bundle.n, 1))))) if bundle.m else 0.0
    return References(x_star=x_star, y_star=y_star, F_star=F_star, G_star=G_star)


# --------------------------------------------------------------------------
# residuals


def _scheduling_cost(bundle, x):
    return float(np.sum(bundle.cpu_costs(x))) if bundle.cpu is not None else 0.0


def lyapunov(state, x_star, y_star, bundle):
    """``0.5 ||(y - y*, z)||^2 + F(x) - F(x*)`` with ``F`` including the box penalty."""
    dy = state.y - np.asarray(y_star)[None, :] if state.m else np.zeros(0)
    ml_part = 0.5 * (float(np.sum(dy * dy)) + float(np.sum(state.z * state.z)))
    if bundle.cpu is None:
        return ml_part
    return ml_part + _scheduling_cost(bundle, state.x) - _scheduling_cost(bundle, x_star)


@dataclass(frozen=True)
class ResidualReport:
    feasibility_gap: float
    consensus_gap: float
    cost_residual: float
    lyapunov: float


def residual_report(state, refs, bundle):
    F = _scheduling_cost(bundle, state.x)
    G = float(np.sum(bundle.ml_values(state.y)))
    dy = state.y - refs.y_star[None, :] if state.m else np.zeros(0)
    V = 0.5 * (float(np.sum(dy * dy)) + float(np.sum(state.z * state.z))) + F - refs.F_star
    return ResidualReport(
        feasibility_gap=abs(math.fsum(state.x) - state.b),
        consensus_gap=consensus_gap(state.y),
        cost_residual=F + G - refs.F_star - refs.G_star,
        lyapunov=V,
    )


def make_recorder(bundle, refs, dt, per_node=False):
    """Trace recorder filling every column from ``residual_report``."""
    offset = refs.F_star + refs.G_star

    def record(state):
        rep = residual_report(state, refs, bundle)
        return TraceRecord(
            step=state.step,
            time=state.step * dt,
            feasibility_gap=rep.feasibility_gap,
            consensus_gap=rep.consensus_gap,
            total_cost=rep.cost_residual + offset,
            cost_residual=rep.cost_residual,
            lyapunov=rep.lyapunov,
            x=state.x.copy() if per_node else None,
        )

    return record


# --------------------------------------------------------------------------
# baseline comparison


def compare_baseline(cpu, b=None):
    """Scheduling cost of the equal-utilisation allocation vs the sum-preserving optimum.

    Returns ``(cost_balancing, cost_sum_preserving, ratio)`` with
    ``ratio = cost_sum_preserving / cost_balancing`` (1 when both vanish).
    """
    if b is not None and float(b) != cpu.total:
        from .objectives import CpuCostSpec

        cpu = CpuCostSpec(cpu.kappa_max, cpu.demand, cpu.used, float(b))
    bal = float(np.sum(cpu_cost_all(balancing_workload(cpu), cpu)[0]))
    opt = float(np.sum(cpu_cost_all(kkt_oracle(cpu), cpu)[0]))
    if opt > bal + 1e-9 * max(1.0, abs(bal)):
        raise AssertionError(f"sum-preserving cost {opt} exceeds balancing cost {bal}")
    ratio = 1.0 if bal == 0 else opt / bal
    return bal, opt, ratio
