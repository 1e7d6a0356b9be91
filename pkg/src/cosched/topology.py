"""Symmetric weighted communication graphs, their switching rule and spectra."""

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

DEFAULT_SWITCH_PERIOD = 100
MAX_RETRIES = 100
WEIGHT_FLOOR = 1e-3


class GraphGenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph on ``n`` nodes stored as a symmetric weight matrix."""

    weights: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {w.shape}")
        if not np.array_equal(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValueError("weight matrix must have a zero diagonal")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n", w.shape[0])

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def edges(self):
        """``(i, j, w)`` triples with ``i < j``."""
        iu, ju = np.nonzero(np.triu(self.weights, k=1))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    @property
    def num_edges(self):
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    def degree(self, i):
        return int(np.count_nonzero(self.weights[i]))

    def neighbors(self, i):
        return [int(j) for j in np.nonzero(self.weights[i])[0]]

    def is_connected(self):
        if self.n <= 1:
            return True
        ncomp, _ = connected_components(self.weights != 0, directed=False)
        return ncomp == 1

    def to_edge_list(self):
        lines = [f"n {self.n}"]
        lines += [f"{i} {j} {w!r}" for i, j, w in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows or rows[0][0] != "n" or len(rows[0]) != 2:
            raise ValueError("edge list must start with a header line 'n <count>'")
        n = int(rows[0][1])
        w = np.zeros((n, n))
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValueError(f"edge line {lineno}: expected 'i j w', got {' '.join(row)!r}")
            i, j, val = int(row[0]), int(row[1]), float(row[2])
            w[i, j] = w[j, i] = val
        return cls(w)

    def save(self, path):
        Path(path).write_text(self.to_edge_list())

    @classmethod
    def load(cls, path):
        return cls.from_edge_list(Path(path).read_text())


def build_erdos_renyi(n, p, seed, max_retries=MAX_RETRIES, weight_floor=WEIGHT_FLOOR):
    """Connected Erdos-Renyi graph with link weights uniform in ``(floor, 1]``.

    Each unordered pair is linked independently with probability ``p``; draws
    are repeated until the graph is connected.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got n={n}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"link probability must lie in (0, 1], got p={p}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        linked = rng.random(iu[0].size) < p
        vals = 1.0 - rng.random(iu[0].size) * (1.0 - weight_floor)
        w = np.zeros((n, n))
        w[iu] = np.where(linked, vals, 0.0)
        w = w + w.T
        g = WeightedGraph(w)
        if g.is_connected():
            return g
    raise GraphGenerationError(
        f"no connected Erdos-Renyi graph after {max_retries} draws (n={n}, p={p}, seed={seed})"
    )


def build_exponential(n):
    """Exponential graph: node ``i`` links to ``(i +- 2**j) mod n``.

    All nodes share one degree ``d``; every link gets weight ``1/(d+1)``.
    """
    k = int(n).bit_length() - 1
    if n < 2 or (1 << k) != n:
        raise ValueError(f"exponential graph needs a power-of-two node count, got n={n}")
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(k):
            for off in (1 << j, -(1 << j)):
                t = (i + off) % n
                if t != i:
                    adj[i, t] = adj[t, i] = True
    deg = adj.sum(axis=1)
    assert np.all(deg == deg[0])
    return WeightedGraph(np.where(adj, 1.0 / (deg[0] + 1.0), 0.0))


def laplacian(g):
    """Laplacian with off-diagonal ``w_ij`` and diagonal ``-sum_j w_ij``.

    This sign convention makes the matrix negative semidefinite.
    """
    w = g.weights if isinstance(g, WeightedGraph) else np.asarray(g, dtype=float)
    return w - np.diag(w.sum(axis=1))


def algebraic_connectivity(lap):
    """Magnitude of the second-largest Laplacian eigenvalue (0 if disconnected)."""
    lap = np.asarray(lap, dtype=float)
    if lap.shape[0] < 2:
        return 0.0
    ev = np.sort(np.linalg.eigvalsh(lap))[::-1]
    lam2 = abs(ev[1])
    scale = max(1.0, abs(ev[-1]))
    if lam2 < 1e-10 * scale:
        return 0.0
    return float(lam2)


@dataclass(frozen=True)
class NetworkSchedule:
    """Finite pool of connected topologies and the rule switching among them."""

    graphs: tuple
    switch_period: int = DEFAULT_SWITCH_PERIOD
    mode: str = "cyclic"
    seed: int = 0

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("schedule needs at least one graph")
        if self.switch_period < 1:
            raise ValueError(f"switch_period must be >= 1, got {self.switch_period}")
        if self.mode not in ("cyclic", "random"):
            raise ValueError(f"switch mode must be 'cyclic' or 'random', got {self.mode!r}")
        sizes = {g.n for g in graphs}
        if len(sizes) != 1:
            raise ValueError(f"all graphs must share one node count, got {sorted(sizes)}")
        for idx, g in enumerate(graphs):
            if not g.is_connected():
                raise ValueError(f"graph {idx} in the schedule is not connected")
        object.__setattr__(self, "graphs", graphs)

    @property
    def n(self):
        return self.graphs[0].n

    def index_at(self, step):
        epoch = step // self.switch_period
        if self.mode == "cyclic" or len(self.graphs) == 1:
            return epoch % len(self.graphs)
        return _random_index(self.seed, epoch, len(self.graphs))


@lru_cache(maxsize=4096)
def _random_index(seed, epoch, count):
    return int(np.random.default_rng([seed, epoch]).integers(count))


def graph_at(schedule, step):
    """Active topology at integrator step ``step``."""
    return schedule.graphs[schedule.index_at(step)]


def erdos_renyi_schedule(n, p, pool_size, seed, switch_period=DEFAULT_SWITCH_PERIOD, mode="cyclic"):
    graphs = [build_erdos_renyi(n, p, seed=(seed, k)) for k in range(pool_size)]
    return NetworkSchedule(tuple(graphs), switch_period=switch_period, mode=mode, seed=seed)
