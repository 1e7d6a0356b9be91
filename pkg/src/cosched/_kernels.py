"""Per-step kernels: quantized consensus advance and stacked ML gradients.

Each kernel is written twice. The loop form is compiled with numba; the
vectorised form is plain numpy. ``_accel.USE_NUMBA`` picks which one the
public dispatchers (``advance``, ``ml_grad``, ``ml_values``) call. Both forms
work on the same packed layout: node ``i`` owns rows
``offsets[i]:offsets[i + 1]`` of ``X``/``labels``.
"""

import math

import numpy as np
import scipy.sparse as sp

from . import _accel

if _accel.USE_NUMBA:
    import numba
    from numba import prange
else:  # pragma: no cover - exercised with COSCHED_NUMBA=0
    prange = range

REGRESSION, SVM, LOGISTIC, NONCONVEX = 1, 2, 3, 4
KIND_CODES = {"regression": REGRESSION, "svm": SVM, "logistic": LOGISTIC, "nonconvex": NONCONVEX}

PEN_NONE, PEN_POWER, PEN_SOFTPLUS = 0, 1, 2


class PackedShards:
    """Contiguous row storage for all node shards.

    For the non-convex kind ``X`` holds the ``(a, b)`` coefficient pairs and
    ``node_consts`` the per-node sums ``(count, sum a, sum b)``.
    """

    def __init__(self, shards_X, shards_y, n_features, nonconvex=False):
        counts = np.array([len(s) for s in shards_y], dtype=np.int64)
        self.counts = counts
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        total = int(self.offsets[-1])
        if total:
            self.X = np.ascontiguousarray(np.concatenate([np.asarray(s, float).reshape(-1, n_features) for s in shards_X]))
            self.labels = np.ascontiguousarray(np.concatenate([np.asarray(s, float) for s in shards_y]))
        else:
            self.X = np.zeros((0, n_features))
            self.labels = np.zeros(0)
        n = len(counts)
        self.owner = np.repeat(np.arange(n), counts)
        self.selector = sp.csr_matrix(
            (np.ones(total), (self.owner, np.arange(total))), shape=(n, total)
        )
        self.nonempty = counts > 0
        self.scratch = np.empty(total)
        self.neg_inv_count = -1.0 / np.maximum(counts, 1).astype(float)[self.owner]
        if nonconvex:
            a_sum = np.asarray(self.selector @ self.X[:, 0]).ravel()
            b_sum = np.asarray(self.selector @ self.X[:, 1]).ravel()
        else:
            a_sum = b_sum = np.zeros(n)
        self.node_consts = np.ascontiguousarray(np.column_stack([counts.astype(float), a_sum, b_sum]))


# --------------------------------------------------------------------------
# scalar helpers (numba-compiled when enabled, plain python otherwise)


def _qscalar(v, rho):
    if v == 0.0:
        return v
    t = math.log(abs(v)) / rho
    if t >= 0.0:
        k = math.floor(t + 0.5)
    else:
        k = -math.floor(-t + 0.5)
    r = math.exp(rho * k)
    return r if v > 0.0 else -r


def _softplus(u):
    # log(1 + exp(u)) without overflow
    if u > 0.0:
        return u + math.log1p(math.exp(-u))
    return math.log1p(math.exp(u))


def _sigmoid(u):
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _plus_grad(u, sigma, variant):
    if variant == PEN_POWER:
        if u <= 0.0:
            return 0.0
        return sigma * u ** (sigma - 1.0)
    return _sigmoid(sigma * u)


def _marginal(x, kappa, demand, eps, sigma, lower, upper, variant):
    g = (x - demand) / kappa
    if variant != PEN_NONE:
        g += eps * (_plus_grad(x - upper, sigma, variant) - _plus_grad(lower - x, sigma, variant))
    return g


# --------------------------------------------------------------------------
# loop kernels


def _loop_quantize(v, rho, out):
    flat_in = v.reshape(-1)
    flat_out = out.reshape(-1)
    for t in range(flat_in.size):
        flat_out[t] = _qscalar(flat_in[t], rho)


def _loop_advance(x, Y, Z, W, kappa, demand, eps, sigma, lower, upper, variant,
                  cpu_on, dt, alpha, rho, quantized, zinc):
    n = x.size
    m = Y.shape[1]
    if cpu_on:
        d = np.empty(n)
        for i in range(n):
            g = _marginal(x[i], kappa[i], demand[i], eps, sigma, lower, upper, variant)
            d[i] = _qscalar(g, rho) if quantized else g
        dx = np.zeros(n)
        for i in range(n):
            s = 0.0
            for j in range(n):
                w = W[i, j]
                if w != 0.0:
                    s += w * (d[j] - d[i])
            dx[i] = s
        for i in range(n):
            x[i] += dt * dx[i]
    if m > 0:
        qy = np.empty((n, m))
        qz = np.empty((n, m))
        if quantized:
            for i in range(n):
                for c in range(m):
                    qy[i, c] = _qscalar(Y[i, c], rho)
                    qz[i, c] = _qscalar(Z[i, c], rho)
        else:
            qy[:, :] = Y
            qz[:, :] = Z
        for i in range(n):
            for c in range(m):
                cy = 0.0
                cz = 0.0
                for j in range(n):
                    w = W[i, j]
                    if w != 0.0:
                        cy += w * (qy[j, c] - qy[i, c])
                        cz += w * (qz[j, c] - qz[i, c])
                Y[i, c] += dt * (cy - alpha * Z[i, c])
                zinc[i, c] = dt * cz


def _loop_grad_regression(Y, X, lab, off, G):
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        for c in range(m):
            G[i, c] = 0.0
        for r in range(off[i], off[i + 1]):
            res = -Y[i, k] - lab[r]
            for c in range(k):
                res += Y[i, c] * X[r, c]
            for c in range(k):
                G[i, c] += 2.0 * res * X[r, c]
            G[i, k] -= 2.0 * res


def _loop_values_regression(Y, X, lab, off, out):
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        s = 0.0
        for r in range(off[i], off[i + 1]):
            res = -Y[i, k] - lab[r]
            for c in range(k):
                res += Y[i, c] * X[r, c]
            s += res * res
        out[i] = s


def _loop_scores(Y, X, off, bias_sign, out):
    # out[r] = w_i . chi_r + bias_sign * bias_i for the owning node i
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        for r in range(off[i], off[i + 1]):
            s = bias_sign * Y[i, k]
            for c in range(k):
                s += Y[i, c] * X[r, c]
            out[r] = s


def _loop_weighted_sum(Y, X, wts, off, ridge, bias_sign, G):
    # G_i = sum_r wts_r (chi_r, bias_sign) + ridge * (w_i, 0); zero on empty shards
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        for c in range(m):
            G[i, c] = 0.0
        if off[i + 1] == off[i]:
            continue
        for r in range(off[i], off[i + 1]):
            s = wts[r]
            for c in range(k):
                G[i, c] += s * X[r, c]
            G[i, k] += s
        G[i, k] *= bias_sign
        for c in range(k):
            G[i, c] += ridge * Y[i, c]


def _loop_values_svm(Y, X, lab, off, C, mu, out):
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        out[i] = 0.0
        if off[i + 1] == off[i]:
            continue
        s = 0.0
        for c in range(k):
            s += Y[i, c] * Y[i, c]
        acc = 0.0
        for r in range(off[i], off[i + 1]):
            score = -Y[i, k]
            for c in range(k):
                score += Y[i, c] * X[r, c]
            acc += _softplus(mu * (1.0 - lab[r] * score)) / mu
        out[i] = s + C * acc


def _loop_values_logistic(Y, X, lab, off, theta, out):
    n, m = Y.shape
    k = m - 1
    for i in prange(n):
        out[i] = 0.0
        cnt = off[i + 1] - off[i]
        if cnt == 0:
            continue
        acc = 0.0
        for r in range(off[i], off[i + 1]):
            z = Y[i, k]
            for c in range(k):
                z += Y[i, c] * X[r, c]
            acc += _softplus(-z * lab[r])
        ridge = 0.0
        for c in range(k):
            ridge += Y[i, c] * Y[i, c]
        out[i] = acc / cnt + 0.5 * theta * ridge


def _loop_grad_nonconvex(Y, consts, G):
    for i in range(Y.shape[0]):
        y = Y[i, 0]
        G[i, 0] = consts[i, 0] * (4.0 * y + 3.0 * math.sin(2.0 * y)) - consts[i, 1] * math.sin(y) + consts[i, 2]


def _loop_values_nonconvex(Y, consts, out):
    for i in range(Y.shape[0]):
        y = Y[i, 0]
        sy = math.sin(y)
        out[i] = consts[i, 0] * (2.0 * y * y + 3.0 * sy * sy) + consts[i, 1] * math.cos(y) + consts[i, 2] * y


# --------------------------------------------------------------------------
# numpy kernels


def np_quantize(v, rho):
    v = np.asarray(v, dtype=np.float64)
    flat = v.reshape(-1)
    out = flat * 0.0  # keeps the sign of zero
    nz = flat != 0.0
    t = np.log(np.abs(flat[nz])) / rho
    k = np.sign(t) * np.floor(np.abs(t) + 0.5)
    out[nz] = np.copysign(np.exp(rho * k), flat[nz])
    return out.reshape(v.shape)


def _np_plus_grad(u, sigma, variant):
    if variant == PEN_POWER:
        return sigma * np.maximum(u, 0.0) ** (sigma - 1.0)
    su = sigma * u
    e = np.exp(-np.abs(su))
    return np.where(su >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def np_marginals(x, kappa, demand, eps, sigma, lower, upper, variant):
    g = (x - demand) / kappa
    if variant != PEN_NONE:
        g = g + eps * (_np_plus_grad(x - upper, sigma, variant) - _np_plus_grad(lower - x, sigma, variant))
    return g


def _np_laplacian_apply(W, deg, v):
    if v.ndim == 1:
        return W @ v - deg * v
    return W @ v - deg[:, None] * v


def _np_advance(x, Y, Z, W, kappa, demand, eps, sigma, lower, upper, variant,
                cpu_on, dt, alpha, rho, quantized, zinc):
    deg = W.sum(axis=1)
    if cpu_on:
        d = np_marginals(x, kappa, demand, eps, sigma, lower, upper, variant)
        if quantized:
            d = np_quantize(d, rho)
        x += dt * _np_laplacian_apply(W, deg, d)
    if Y.shape[1] > 0:
        qy = np_quantize(Y, rho) if quantized else Y
        qz = np_quantize(Z, rho) if quantized else Z
        cy = _np_laplacian_apply(W, deg, qy)
        zinc[...] = dt * _np_laplacian_apply(W, deg, qz)
        Y += dt * (cy - alpha * Z)


def _np_softplus(u):
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _np_sigmoid(u):
    e = np.exp(-np.abs(u))
    return np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _np_scores(Y, packed):
    rows = Y[packed.owner]
    k = Y.shape[1] - 1
    return np.einsum("rc,rc->r", packed.X, rows[:, :k]), rows


def _np_grad(kind, Y, packed, params, G):
    n, m = Y.shape
    if kind == NONCONVEX:
        cnt, A, B = packed.node_consts.T
        y = Y[:, 0]
        G[:, 0] = cnt * (4.0 * y + 3.0 * np.sin(2.0 * y)) - A * np.sin(y) + B
        return
    k = m - 1
    X, lab = packed.X, packed.labels
    lin, rows = _np_scores(Y, packed)
    contrib = np.empty((X.shape[0], m))
    if kind == REGRESSION:
        res = lin - rows[:, k] - lab
        contrib[:, :k] = 2.0 * res[:, None] * X
        contrib[:, k] = -2.0 * res
        G[...] = packed.selector @ contrib
    elif kind == SVM:
        C, mu = params[0], params[1]
        theta = 1.0 - lab * (lin - rows[:, k])
        s = C * lab * _np_sigmoid(mu * theta)
        contrib[:, :k] = -s[:, None] * X
        contrib[:, k] = s
        G[...] = packed.selector @ contrib
        G[:, :k] += 2.0 * Y[:, :k] * packed.nonempty[:, None]
    elif kind == LOGISTIC:
        theta = params[2]
        z = lin + rows[:, k]
        inv = 1.0 / np.maximum(packed.counts, 1)
        s = -lab * _np_sigmoid(-z * lab) * inv[packed.owner]
        contrib[:, :k] = s[:, None] * X
        contrib[:, k] = s
        G[...] = packed.selector @ contrib
        G[:, :k] += theta * Y[:, :k] * packed.nonempty[:, None]
    else:
        raise ValueError(f"unknown objective kind code {kind}")


def _np_values(kind, Y, packed, params):
    n, m = Y.shape
    if kind == NONCONVEX:
        cnt, A, B = packed.node_consts.T
        y = Y[:, 0]
        return cnt * (2.0 * y**2 + 3.0 * np.sin(y) ** 2) + A * np.cos(y) + B * y
    k = m - 1
    lab = packed.labels
    lin, rows = _np_scores(Y, packed)
    if kind == REGRESSION:
        res = lin - rows[:, k] - lab
        return packed.selector @ (res * res)
    if kind == SVM:
        C, mu = params[0], params[1]
        theta = 1.0 - lab * (lin - rows[:, k])
        data = packed.selector @ (_np_softplus(mu * theta) / mu)
        return (np.sum(Y[:, :k] ** 2, axis=1) + C * data) * packed.nonempty
    if kind == LOGISTIC:
        theta = params[2]
        z = lin + rows[:, k]
        data = (packed.selector @ _np_softplus(-z * lab)) / np.maximum(packed.counts, 1)
        return (data + 0.5 * theta * np.sum(Y[:, :k] ** 2, axis=1)) * packed.nonempty
    raise ValueError(f"unknown objective kind code {kind}")


# --------------------------------------------------------------------------
# compilation and dispatch

if _accel.USE_NUMBA:
    _jit = numba.njit(cache=True)
    _pjit = numba.njit(parallel=_accel.PARALLEL, cache=True)

    _qscalar = _jit(_qscalar)
    _softplus = _jit(_softplus)
    _sigmoid = _jit(_sigmoid)
    _plus_grad = _jit(_plus_grad)
    _marginal = _jit(_marginal)
    _nb_quantize = _jit(_loop_quantize)
    _nb_advance = _jit(_loop_advance)
    _nb_grad_regression = _pjit(_loop_grad_regression)
    _nb_values_regression = _pjit(_loop_values_regression)
    _nb_scores = _pjit(_loop_scores)
    _nb_weighted_sum = _pjit(_loop_weighted_sum)
    _nb_values_svm = _pjit(_loop_values_svm)
    _nb_values_logistic = _pjit(_loop_values_logistic)
    _nb_grad_nonconvex = _jit(_loop_grad_nonconvex)
    _nb_values_nonconvex = _jit(_loop_values_nonconvex)


def quantize_array(v, rho):
    """Element-wise log quantization of an array (no enable flag)."""
    v = np.asarray(v, dtype=np.float64)
    if not _accel.USE_NUMBA:
        return np_quantize(v, rho)
    src = np.ascontiguousarray(v)
    out = np.empty_like(src)
    _nb_quantize(src, float(rho), out)
    return out


def advance(x, Y, Z, W, cpu, dt, alpha, rho, quantized, zinc):
    """Advance ``x`` and ``Y`` in place by one synchronous Euler round.

    ``cpu`` is the tuple ``(enabled, kappa, demand, eps, sigma, lower, upper,
    variant)``. The consensus increment for ``Z`` (already scaled by ``dt``)
    is written to ``zinc``; the caller adds the gradient increment.
    """
    cpu_on, kappa, demand, eps, sigma, lower, upper, variant = cpu
    fn = _nb_advance if _accel.USE_NUMBA else _np_advance
    fn(x, Y, Z, W, kappa, demand, eps, sigma, lower, upper, variant,
       cpu_on, dt, alpha, rho, quantized, zinc)


def marginals(x, cpu):
    _, kappa, demand, eps, sigma, lower, upper, variant = cpu
    return np_marginals(x, kappa, demand, eps, sigma, lower, upper, variant)


def _sigmoid_inplace(u):
    # sigmoid(u) = (1 + tanh(u/2)) / 2; one vectorised transcendental call
    u *= 0.5
    np.tanh(u, out=u)
    u += 1.0
    u *= 0.5


def _hybrid_grad(kind, Y, packed, params, G):
    # compiled loops for the row scores and the per-node sums, numpy for the
    # sigmoid (vectorised exp is an order of magnitude faster than scalar)
    C, mu, theta = params
    buf = packed.scratch
    lab = packed.labels
    if kind == SVM:
        _nb_scores(Y, packed.X, packed.offsets, -1.0, buf)
        buf *= lab
        np.subtract(1.0, buf, out=buf)
        buf *= mu
        _sigmoid_inplace(buf)
        buf *= lab
        buf *= -C
        _nb_weighted_sum(Y, packed.X, buf, packed.offsets, 2.0, -1.0, G)
    else:
        _nb_scores(Y, packed.X, packed.offsets, 1.0, buf)
        buf *= lab
        np.negative(buf, out=buf)
        _sigmoid_inplace(buf)
        buf *= lab
        buf *= packed.neg_inv_count
        _nb_weighted_sum(Y, packed.X, buf, packed.offsets, theta, 1.0, G)


def ml_grad(kind, Y, packed, params, G):
    """Write every node's local gradient into ``G`` (shape ``(n, m)``)."""
    if not _accel.USE_NUMBA:
        _np_grad(kind, Y, packed, params, G)
        return
    if kind == REGRESSION:
        _nb_grad_regression(Y, packed.X, packed.labels, packed.offsets, G)
    elif kind in (SVM, LOGISTIC):
        _hybrid_grad(kind, Y, packed, params, G)
    elif kind == NONCONVEX:
        _nb_grad_nonconvex(Y, packed.node_consts, G)
    else:
        raise ValueError(f"unknown objective kind code {kind}")


def ml_values(kind, Y, packed, params):
    """Every node's local loss value, shape ``(n,)``."""
    if not _accel.USE_NUMBA:
        return np.asarray(_np_values(kind, Y, packed, params), dtype=float)
    out = np.empty(Y.shape[0])
    if kind == REGRESSION:
        _nb_values_regression(Y, packed.X, packed.labels, packed.offsets, out)
    elif kind == SVM:
        _nb_values_svm(Y, packed.X, packed.labels, packed.offsets, params[0], params[1], out)
    elif kind == LOGISTIC:
        _nb_values_logistic(Y, packed.X, packed.labels, packed.offsets, params[2], out)
    elif kind == NONCONVEX:
        _nb_values_nonconvex(Y, packed.node_consts, out)
    else:
        raise ValueError(f"unknown objective kind code {kind}")
    return out
