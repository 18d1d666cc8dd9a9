"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time.  Set ``LLM_JURY_DISABLE_NUMBA=1``
to force the numpy path (also used automatically when numba is missing).
Both backends agree to floating-point rounding; ``tests/test_kernels.py``
checks this on random inputs.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

OFFSET, RMSE, SPEARMAN, KAPPA, MEAN = 0, 1, 2, 3, 4
METRIC_CODES = {"offset": OFFSET, "rmse": RMSE, "spearman": SPEARMAN, "kappa": KAPPA, "mean": MEAN}


def _numba_disabled() -> bool:
    return os.environ.get("LLM_JURY_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


if _numba_disabled():
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl  # type: ignore[no-redef]

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is an optional extra
        _impl = _numpy
        BACKEND = "numpy"


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def average_ranks(x) -> np.ndarray:
    return _impl.average_ranks(_f64(x))


def resample_stat(ref, other, offsets, members, draws, code: int) -> np.ndarray:
    """Statistic ``code`` on each bootstrap resample of grouped pairs.

    ``offsets``/``members`` are a CSR layout of group -> row indices and
    ``draws`` is a (n_resamples, n_groups) matrix of drawn group indices.
    Undefined values come back as NaN.
    """
    return _impl.resample_stat(_f64(ref), _f64(other), _i64(offsets), _i64(members), _i64(draws), int(code))


def kendall_tau_b(x, y) -> float:
    return float(_impl.kendall_tau_b(_f64(x), _f64(y)))


def pava(y, w) -> np.ndarray:
    return _impl.pava(_f64(y), _f64(w))


def kde_eval(grid, data, h: float) -> np.ndarray:
    return _impl.kde_eval(_f64(grid), _f64(data), float(h))
