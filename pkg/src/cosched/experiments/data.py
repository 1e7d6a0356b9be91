"""Synthetic datasets, sharding across nodes and CSV ingestion."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples as rows of ``features`` with ``labels``.

    For the non-convex kind the rows are coefficient pairs ``(a, b)`` and
    ``owner`` names the node each pair belongs to.
    """

    kind: str
    features: np.ndarray
    labels: np.ndarray
    owner: np.ndarray = None
    truth: np.ndarray = None

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_owner = (self.owner is None and other.owner is None) or (
            self.owner is not None and other.owner is not None and np.array_equal(self.owner, other.owner)
        )
        return (
            self.kind == other.kind
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and same_owner
        )


def _blobs(rng, n_points, dim, separation, margin):
    """Two unit-variance Gaussian blobs, labels +-1, truncated to be separable.

    Means sit at ``+-separation/2`` along the diagonal direction; samples whose
    projection falls within ``margin`` of the midplane are redrawn.
    """
    direction = np.ones(dim) / math.sqrt(dim)
    labels = np.where(np.arange(n_points) % 2 == 0, 1.0, -1.0)
    rng.shuffle(labels)
    X = np.empty((n_points, dim))
    todo = np.arange(n_points)
    while todo.size:
        draw = rng.normal(size=(todo.size, dim)) + labels[todo, None] * (separation / 2.0) * direction
        X[todo] = draw
        ok = labels[todo] * (draw @ direction) > margin
        todo = todo[~ok]
    return X, labels


def generate_dataset(kind, params=None, seed=0):
    """Synthetic data for one ML objective kind.

    ``params`` keys: ``n_points``; ``dim``; ``separation``/``margin`` (svm,
    logistic); ``noise`` (regression); ``n_nodes`` and ``coef_range``
    (nonconvex: ``n_points`` pairs per node, strictly inside
    ``(-coef_range, coef_range)`` with column sums zero).
    """
    p = dict(params or {})
    rng = np.random.default_rng(seed)
    N = int(p.get("n_points", 1000))
    if kind == "svm":
        X, y = _blobs(rng, N, int(p.get("dim", 2)), float(p.get("separation", 4.0)), float(p.get("margin", 0.25)))
        return Dataset(kind, X, y)
    if kind == "logistic":
        X, y = _blobs(rng, N, int(p.get("dim", 20)), float(p.get("separation", 2.0)), float(p.get("margin", -np.inf)))
        return Dataset(kind, X, y)
    if kind == "regression":
        dim = int(p.get("dim", 1))
        w = rng.uniform(-2.0, 2.0, size=dim)
        bias = rng.uniform(-1.0, 1.0)
        X = rng.normal(size=(N, dim))
        y = X @ w - bias + float(p.get("noise", 0.5)) * rng.normal(size=N)
        return Dataset(kind, X, y, truth=np.append(w, bias))
    if kind == "nonconvex":
        n = int(p.get("n_nodes", 20))
        lim = float(p.get("coef_range", 5.0))
        coef = rng.uniform(-lim, lim, size=(n * N, 2))
        coef -= coef.mean(axis=0)
        # centring can push a few entries past the range; shrink those columns
        peak = np.abs(coef).max(axis=0)
        coef *= np.minimum(1.0, np.nextafter(lim, 0.0) / np.maximum(peak, np.finfo(float).tiny))
        owner = np.repeat(np.arange(n), N)
        return Dataset(kind, coef, np.zeros(n * N), owner=owner)
    raise ValueError(f"unknown dataset kind {kind!r}")


def shard_dataset(dataset, n, q, seed):
    """Per-node index arrays; each node draws ``ceil(q N)`` rows without replacement.

    Draws are independent across nodes, so shards overlap. Datasets carrying
    an ``owner`` column are split by owner instead.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"shard fraction must lie in (0, 1], got {q}")
    if dataset.owner is not None:
        return [np.flatnonzero(dataset.owner == i) for i in range(n)]
    N = len(dataset)
    size = math.ceil(q * N - 1e-9)
    shards = []
    for i in range(n):
        if size >= N:
            shards.append(np.arange(N))
        else:
            pick = np.random.default_rng([seed, 7, i]).choice(N, size=size, replace=False)
            shards.append(np.sort(pick))
    return shards


def write_csv(dataset, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if dataset.kind == "nonconvex":
            w.writerow(["node", "a", "b"])
            for node, (a, b) in zip(dataset.owner, dataset.features):
                w.writerow([int(node), repr(float(a)), repr(float(b))])
        else:
            k = dataset.features.shape[1]
            w.writerow([f"f{j + 1}" for j in range(k)] + ["label"])
            for row, lab in zip(dataset.features, dataset.labels):
                w.writerow([repr(float(v)) for v in row] + [repr(float(lab))])
    return path


def read_csv(path, kind):
    """Load a dataset written by ``write_csv`` (or any file with the same header)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if kind == "nonconvex":
        if header != ["node", "a", "b"]:
            raise ValueError(f"{path}: nonconvex coefficients need header 'node,a,b', got {','.join(header)}")
        return Dataset(kind, data[:, 1:3].copy(), np.zeros(len(data)), owner=data[:, 0].astype(int))
    if header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label', got {header[-1]!r}")
    return Dataset(kind, data[:, :-1].copy(), data[:, -1].copy())
