"""Logarithmic quantization of exchanged messages."""

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class QuantizerConfig:
    """Log-scale quantizer settings.

    ``enabled=False`` turns the quantizer into the identity, which is the
    ideal-exchange (linear) solver.
    """

    rho: float = 0.125
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not (0.0 < self.rho <= 1.0):
            raise ValueError(f"quantization level rho must lie in (0, 1], got {self.rho}")


def quantize(x, cfg):
    """Return ``sgn(x) * exp(rho * round(ln|x| / rho))`` element-wise.

    Zero maps to zero and half-integers round away from zero. Scalars in,
    scalars out; arrays keep their shape.
    """
    if not cfg.enabled:
        return x
    if np.isscalar(x):
        return float(_kernels.np_quantize(np.float64(x), cfg.rho))
    return _kernels.quantize_array(x, cfg.rho)


def sector_envelope(rho):
    """Exact multiplicative bounds ``(exp(-rho/2), exp(rho/2))`` on ``q(x)/x``."""
    return float(np.exp(-rho / 2.0)), float(np.exp(rho / 2.0))


def gains(x, cfg):
    """Per-entry ratios ``q(x)/x`` (1 where ``x == 0`` or disabled)."""
    x = np.asarray(x, dtype=float)
    if not cfg.enabled:
        return np.ones_like(x)
    q = _kernels.quantize_array(x, cfg.rho)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = q[nz] / x[nz]
    return out
