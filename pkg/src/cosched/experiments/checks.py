"""Finite-difference verification of the analytic gradients and Hessians."""

import numpy as np

from ..objectives import MlObjectiveSpec, ml_hessian, ml_loss
from .data import generate_dataset

KINDS = ("regression", "svm", "logistic", "nonconvex")


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def fd_gradient(spec, y, h_scale=1e-6):
    y = np.asarray(y, dtype=float)
    g = np.empty_like(y)
    for c in range(y.size):
        h = h_scale * max(1.0, abs(y[c]))
        e = np.zeros_like(y)
        e[c] = h
        g[c] = (ml_loss(y + e, spec)[0] - ml_loss(y - e, spec)[0]) / (2 * h)
    return g


def fd_hessian(spec, y, h_scale=1e-5):
    y = np.asarray(y, dtype=float)
    H = np.empty((y.size, y.size))
    for c in range(y.size):
        h = h_scale * max(1.0, abs(y[c]))
        e = np.zeros_like(y)
        e[c] = h
        H[:, c] = (ml_loss(y + e, spec)[1] - ml_loss(y - e, spec)[1]) / (2 * h)
    return 0.5 * (H + H.T)


def sample_spec(kind, seed, n_points=40):
    """Small single-node objective used by ``gradcheck``."""
    if kind == "nonconvex":
        ds = generate_dataset(kind, {"n_points": n_points, "n_nodes": 1}, seed=seed)
    else:
        ds = generate_dataset(kind, {"n_points": n_points, "dim": 3 if kind != "logistic" else 5}, seed=seed)
    return MlObjectiveSpec(kind, ds.features, ds.labels)


def gradcheck(points=100, seed=0, kinds=KINDS):
    """Worst relative gradient and Hessian error per kind over random points.

    Returns ``{kind: (grad_err, hess_err)}``. Errors are scaled by
    ``max(1, |reference|)`` so near-zero entries do not blow up the ratio.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for kind in kinds:
        spec = sample_spec(kind, seed)
        ge = he = 0.0
        for _ in range(points):
            y = rng.uniform(-2.0, 2.0, size=spec.dim)
            ge = max(ge, _rel(ml_loss(y, spec)[1], fd_gradient(spec, y)))
            he = max(he, _rel(ml_hessian(y, spec), fd_hessian(spec, y)))
        out[kind] = (ge, he)
    return out
