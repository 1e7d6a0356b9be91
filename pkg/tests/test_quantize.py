import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cosched.quantize import QuantizerConfig, gains, quantize, sector_envelope

RHOS = [1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0]
finite = st.floats(-1e12, 1e12, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-300)


@pytest.mark.parametrize(
    "x, rho, expected",
    [(1.0, 1.0, 1.0), (2.0, 1.0, math.e), (-2.0, 1.0, -math.e), (0.0, 0.5, 0.0), (0.0, 1.0, 0.0)],
)
def test_quantize_examples(x, rho, expected):
    assert quantize(x, QuantizerConfig(rho)) == pytest.approx(expected, rel=1e-15)


def test_disabled_is_identity():
    v = np.array([0.3, -7.0, 0.0])
    assert quantize(v, QuantizerConfig(rho=5.0, enabled=False)) is v


@pytest.mark.parametrize("rho", [0.0, -0.1, 1.5])
def test_rho_validation(rho):
    with pytest.raises(ValueError):
        QuantizerConfig(rho=rho)


def test_half_integer_rounds_away_from_zero():
    # ln|x| lands just beyond +-0.5 bins; both round outward
    cfg = QuantizerConfig(1.0)
    up = quantize(math.exp(0.5) * (1 + 1e-15), cfg)
    assert up == pytest.approx(math.e)
    down = quantize(math.exp(-0.5) * (1 - 1e-15), cfg)
    assert down == pytest.approx(math.exp(-1))


@given(x=finite, rho=st.sampled_from(RHOS))
def test_odd_and_sign_preserving(x, rho):
    cfg = QuantizerConfig(rho)
    q = quantize(x, cfg)
    assert quantize(-x, cfg) == -q
    assert x * q >= 0
    assert (q == 0) == (x == 0)


@given(x=finite.filter(lambda v: v != 0), rho=st.sampled_from(RHOS))
def test_sector_envelope(x, rho):
    lo, hi = sector_envelope(rho)
    r = quantize(x, QuantizerConfig(rho)) / x
    assert lo * (1 - 1e-15) <= r <= hi * (1 + 1e-15)


@given(a=finite, b=finite, rho=st.sampled_from(RHOS))
def test_monotone(a, b, rho):
    cfg = QuantizerConfig(rho)
    lo, hi = min(a, b), max(a, b)
    assert quantize(lo, cfg) <= quantize(hi, cfg)


@pytest.mark.parametrize("x", [0.37, -12.5, 3e4])
def test_small_rho_limit(x):
    errs = [abs(quantize(x, QuantizerConfig(r)) - x) for r in (1.0, 0.1, 0.01, 0.001)]
    for r, e in zip((1.0, 0.1, 0.01, 0.001), errs):
        assert e <= abs(x) * (math.exp(r / 2) - 1) * (1 + 1e-12)
    assert errs[-1] < 1e-3 * abs(x)


def test_array_matches_scalar_and_keeps_shape():
    cfg = QuantizerConfig(0.125)
    v = np.random.default_rng(0).normal(size=(4, 3)) * 100
    v[1, 2] = 0.0
    q = quantize(v, cfg)
    assert q.shape == v.shape
    assert all(q[i, j] == quantize(float(v[i, j]), cfg) for i in range(4) for j in range(3))


def test_gains_inside_envelope():
    cfg = QuantizerConfig(0.25)
    x = np.array([0.0, 1e-3, -5.0, 1e5])
    g = gains(x, cfg)
    lo, hi = sector_envelope(0.25)
    assert g[0] == 1.0
    assert np.all((g[1:] >= lo) & (g[1:] <= hi))
