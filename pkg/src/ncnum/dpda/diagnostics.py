"""Residuals of a run against a reference saddle point and the ``Theta_1 / K`` bound.

The true saddle point is unknown, so the bound is evaluated at a reference
solution (typically :func:`ncnum.baselines.centralized_solve`) and is labelled
``reference-relative``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ncnum.dpda.engine import RunTrace
from ncnum.dpda.stepsizes import StepSizes, kappa_vector, tau_diagonal
from ncnum.errors import DimensionMismatch
from ncnum.network import Network, capacity_matrix, capacity_vector, incidence_matrix

__all__ = ["Residuals", "BoundReport", "residuals", "theta1", "bound_report"]


@dataclass
class Residuals:
    """Per-``K`` residuals; row ``K - 1`` describes ``xbar^K``."""

    k: np.ndarray
    conservation: np.ndarray
    capacity: np.ndarray
    utility_gap: np.ndarray


@dataclass
class BoundReport:
    theta1: float
    feasibility: np.ndarray   # ||theta*|| ||B xbar|| + sum |lam*| h(...)
    optimality: np.ndarray    # |sum p^T (mbar - m*)|
    bound: np.ndarray         # theta1 / K
    label: str = "reference-relative"

    @property
    def holds(self) -> bool:
        return bool(np.all(self.feasibility <= self.bound) and np.all(self.optimality <= self.bound))


def _pvec(net: Network, utilities) -> np.ndarray:
    p = np.zeros(net.dim)
    for s in net.sources:
        _, mi, _ = net.source_block(s)
        p[mi] = utilities[s].p
    return p


def _check(net: Network, trace: RunTrace, reference) -> None:
    if trace.X.shape[1] != net.dim or np.asarray(reference.x).shape != (net.dim,):
        raise DimensionMismatch("trace, reference and network disagree on the primal dimension")
    if np.asarray(reference.lam).shape != (len(net.capacity_rows),):
        raise DimensionMismatch("reference prices do not match the capacity rows")
    if np.asarray(reference.theta).shape != (len(net.conservation_rows),):
        raise DimensionMismatch("reference conservation duals do not match the conservation rows")


def residuals(net: Network, trace: RunTrace, reference) -> Residuals:
    """Conservation ``||B xbar||``, capacity ``sum max(A xbar - c, 0)`` and utility gap.

    Raises
    ------
    DimensionMismatch
    """
    _check(net, trace, reference)
    gap = np.abs(trace.xbar @ _pvec(net, trace.utilities) - _pvec(net, trace.utilities) @ reference.x)
    return Residuals(trace.k.copy(), trace.conservation.copy(), trace.capacity_distance.copy(), gap)


def theta1(net: Network, ss: StepSizes, reference, x0: np.ndarray) -> float:
    """The constant of the ``1/K`` bound for start ``x0`` at the reference saddle point."""
    B = incidence_matrix(net)
    th = np.asarray(reference.theta, dtype=float)
    lam = np.asarray(reference.lam, dtype=float)
    dx = np.asarray(reference.x, dtype=float) - np.asarray(x0, dtype=float)
    # every source column (rates, moments, r) carries 1/tau_s
    quad = 0.5 * float(tau_diagonal(net, ss) @ dx**2)
    bx0 = float(np.linalg.norm(B @ x0)) if B.shape[0] else 0.0
    return (2.0 / ss.gamma) * float(th @ th) - 0.5 * ss.gamma * bx0**2 + quad \
        + 0.5 * float((lam**2 / kappa_vector(net, ss)).sum())


def bound_report(net: Network, trace: RunTrace, ss: StepSizes, reference) -> BoundReport:
    """Evaluate both sides of the feasibility and optimality bounds for every ``K``."""
    _check(net, trace, reference)
    A = capacity_matrix(net)
    c = capacity_vector(net)
    h = np.maximum(trace.xbar @ A.T - c, 0.0) if A.shape[0] else np.zeros((trace.K, 0))
    feas = np.linalg.norm(reference.theta) * trace.conservation + h @ np.abs(reference.lam)
    res = residuals(net, trace, reference)
    t1 = theta1(net, ss, reference, trace.X[0])
    return BoundReport(t1, feas, res.utility_gap, t1 / trace.k)
