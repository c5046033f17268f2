"""Empirical convergence rate: least-squares slope of log(residual) against log(K)."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ncnum.errors import InsufficientData, NonPositiveResiduals

__all__ = ["MIN_ROWS", "fit_rate", "fit_rate_arrays"]

MIN_ROWS = 20

_ALIASES = {"conservation_residual": "conservation", "capacity_distance": "capacity_distance",
            "conservation": "conservation", "utility_gap": "utility_gap"}


def fit_rate_arrays(k, values, burn_in: float | int = 0.1) -> float:
    """Slope of ``log(values)`` on ``log(k)`` after dropping the first rows.

    ``burn_in`` below 1 is a fraction of the rows, otherwise a row count.

    Raises
    ------
    InsufficientData
        Fewer than 20 rows remain.
    NonPositiveResiduals
        A remaining residual is zero or negative (already converged).
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(values, dtype=float)
    if k.shape != y.shape or k.ndim != 1:
        raise ValueError("k and values must be 1-D arrays of the same length")
    skip = int(np.floor(burn_in * len(k))) if 0 <= burn_in < 1 else int(burn_in)
    if skip < 0:
        raise ValueError("burn_in must be nonnegative")
    k, y = k[skip:], y[skip:]
    if len(k) < MIN_ROWS:
        raise InsufficientData(f"{len(k)} rows after burn-in; need at least {MIN_ROWS}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        n = int(np.sum(~(y > 0)))
        raise NonPositiveResiduals(f"{n} of {len(y)} residuals are not positive (already converged)")
    if np.any(k <= 0):
        raise ValueError("k must be positive")
    slope, _ = np.polyfit(np.log(k), np.log(y), 1)
    return float(slope)


def fit_rate(trace, burn_in: float | int = 0.1, column: str = "conservation") -> float:
    """Fitted exponent of a residual column of a run.

    ``trace`` is a :class:`~ncnum.dpda.RunTrace`, a
    :class:`~ncnum.harness.traceio.TraceTable`, a mapping with ``k`` and the
    column, or a ``(k, values)`` pair.
    """
    if isinstance(trace, tuple):
        k, y = trace
    elif isinstance(trace, Mapping):
        k, y = trace["k"], trace[column]
    elif hasattr(trace, "header"):
        name = {"conservation": "conservation_residual"}.get(column, column)
        k, y = trace.k, trace.column(name)
    else:
        k, y = trace.k, getattr(trace, _ALIASES.get(column, column))
    return fit_rate_arrays(k, y, burn_in)
