"""Backend switch for the hot kernels.

``COSCHED_NUMBA=0`` forces the pure-numpy path even when numba is importable.
``COSCHED_THREADS`` caps the numba worker pool; a value above 1 routes the
per-node gradient kernels through their ``prange`` variants.
"""

import os

_FALSE = {"0", "false", "no", "off"}


def _numba_requested():
    return os.environ.get("COSCHED_NUMBA", "1").strip().lower() not in _FALSE


def _thread_cap():
    raw = os.environ.get("COSCHED_THREADS", "1").strip()
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"COSCHED_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


USE_NUMBA = False
if _numba_requested():
    try:
        import numba  # noqa: F401

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

THREADS = _thread_cap()
PARALLEL = USE_NUMBA and THREADS > 1

if PARALLEL:
    import numba

    numba.set_num_threads(min(THREADS, numba.config.NUMBA_NUM_THREADS))


def backend_name():
    if not USE_NUMBA:
        return "numpy"
    return "numba-parallel" if PARALLEL else "numba"
