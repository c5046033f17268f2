"""Euclidean projections used by the source update.

The source set couples a rate split ``x`` over first-hop links, a moment
vector ``m`` and an aggregate rate ``r``:

* ``m_0 = 1``, ``M(0, ell, m) >= 0`` and ``beta M(0, ell-2, m) - M(2, ell, m) >= 0``;
* ``m_j <= r**(j/ell)`` for ``j = 1..ell`` with ``0 <= r <= zeta``;
* ``0 <= x_l <= c_l``, ``xi <= r <= zeta`` and ``r = sum(x)``.

:func:`project_As` computes the projection with consensus ADMM, one copy per
constraint block, each with its own exact projection.  Warm starts are
supported through :class:`ADMMState`.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ncnum.errors import DimensionMismatch, MaxIterationsExceeded, NoRoot
from ncnum.geometry import _kernels as K
from ncnum.geometry.eigen import MAX_SWEEPS, OFF_TOL, psd_clamp

__all__ = [
    "SourcePoint",
    "ProjectionConfig",
    "ProjectionReport",
    "ADMMState",
    "project_hypograph",
    "project_Xs",
    "project_As",
    "as_violation",
    "dykstra",
]


@dataclass
class SourcePoint:
    """A source's triple: first-hop rates ``x``, moments ``m`` (length ell+1), aggregate ``r``."""

    x: np.ndarray
    m: np.ndarray
    r: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.m = np.asarray(self.m, dtype=float).reshape(-1)
        self.r = float(self.r)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.m, [self.r]])

    def distance(self, other: "SourcePoint") -> float:
        return float(np.linalg.norm(self.flat() - other.flat()))


@dataclass(frozen=True)
class ProjectionConfig:
    """Settings for :func:`project_As`.

    ``tol`` bounds the ADMM primal and dual residuals; ``feas_tol`` is the
    largest constraint violation accepted in the returned point.
    """

    max_iter: int = 200000
    tol: float = 1e-9
    feas_tol: float = 1e-8
    rho: float = 1.0


@dataclass
class ADMMState:
    """Copies and scaled duals of the ADMM splitting (reusable as a warm start)."""

    W0: np.ndarray
    Y0: np.ndarray
    W1: np.ndarray
    Y1: np.ndarray
    Wh: np.ndarray
    Yh: np.ndarray
    Wx: np.ndarray
    Yx: np.ndarray
    rho: float = 1.0

    def copy(self) -> "ADMMState":
        return ADMMState(*(a.copy() for a in self.arrays()), rho=self.rho)

    def arrays(self):
        return (self.W0, self.Y0, self.W1, self.Y1, self.Wh, self.Yh, self.Wx, self.Yx)


@dataclass
class ProjectionReport:
    result: SourcePoint
    iterations: int
    max_constraint_violation: float
    converged: bool = True
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    state: ADMMState | None = field(default=None, repr=False)


def project_hypograph(m_j: float, r: float, j: int, ell: int, zeta: float) -> tuple[float, float]:
    """Project ``(m_j, r)`` onto ``{(a, b): a <= b**(j/ell), 0 <= b <= zeta}``.

    The nearest point lies on one of the two vertical edges or on the curve
    ``(y**j, y**ell)``, ``0 <= y <= zeta**(1/ell)``.  Curve candidates come from
    local minima of a 65-point grid in ``y``, each refined by safeguarded
    Newton on the stationarity equation.  ``j = ell`` is the half-plane
    ``a <= b`` cut to the strip.
    """
    if not 1 <= j <= ell:
        raise ValueError(f"need 1 <= j <= ell, got j={j}, ell={ell}")
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    a, b = K.hypograph_kernel(float(m_j), float(r), int(j), int(ell), float(zeta))
    if not (np.isfinite(a) and np.isfinite(b)):
        raise NoRoot(f"hypograph projection failed for ({m_j}, {r}), j={j}")
    return float(a), float(b)


def project_Xs(x, r: float, xi: float, zeta: float, caps=None) -> tuple[np.ndarray, float]:
    """Project ``(x, r)`` onto ``{0 <= x <= caps, xi <= r <= zeta, r = sum(x)}``.

    The multiplier of ``r = sum(x)`` is the root of a monotone scalar
    equation, found by bisection; ``caps=None`` means no per-link cap.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    c = np.full(x.shape, np.inf) if caps is None else np.asarray(caps, dtype=float).reshape(-1)
    if c.shape != x.shape:
        raise DimensionMismatch(f"caps has shape {c.shape}, x has {x.shape}")
    if xi > zeta:
        raise ValueError(f"empty rate interval [{xi}, {zeta}]")
    if xi > c.sum():
        raise ValueError(f"minimum rate {xi} exceeds the first-hop capacity {c.sum()}")
    xo, ro = K.xs_kernel(x, float(r), float(xi), float(zeta), c)
    return xo, float(ro)


def dykstra(projections: Sequence[Callable[[np.ndarray], np.ndarray]], x0,
            *, max_iter: int = 10000, tol: float = 1e-12) -> tuple[np.ndarray, int]:
    """Dykstra's alternating projections onto an intersection of convex sets.

    Returns the limit point and the number of full cycles.  Stops once a full
    cycle moves the iterate and every correction term by less than ``tol``.

    Raises
    ------
    MaxIterationsExceeded
        With the last iterate attached as ``report``.
    """
    x = np.array(x0, dtype=float)
    incs = [np.zeros_like(x) for _ in projections]
    for it in range(1, max_iter + 1):
        change = 0.0
        for k, proj in enumerate(projections):
            y = x + incs[k]
            xn = np.asarray(proj(y), dtype=float)
            new_inc = y - xn
            change = max(change, float(np.max(np.abs(xn - x), initial=0.0)),
                         float(np.max(np.abs(new_inc - incs[k]), initial=0.0)))
            incs[k] = new_inc
            x = xn
        if change <= tol:
            return x, it
    raise MaxIterationsExceeded(f"Dykstra did not converge in {max_iter} cycles", report=x)


@functools.lru_cache(maxsize=64)
def _lift_gram(ell: int, beta: float) -> np.ndarray:
    h = ell // 2
    zero = np.zeros(ell)
    H0c, H1c = K.hankel_lift(zero, beta, h)
    cols = []
    for k in range(ell):
        e = np.zeros(ell)
        e[k] = 1.0
        H0, H1 = K.hankel_lift(e, beta, h)
        cols.append(np.concatenate([(H0 - H0c).ravel(), (H1 - H1c).ravel()]))
    G = np.array(cols).T
    GtG = G.T @ G
    GtG.setflags(write=False)
    return GtG


def _params(u) -> tuple[int, float, float, float]:
    return int(u.order), float(u.xi), float(u.zeta), float(u.beta)


def as_violation(p: SourcePoint, u, caps) -> float:
    """Largest violation of any source-set constraint at ``p``.

    ``u`` supplies ``order``, ``xi``, ``zeta`` and ``beta``.
    """
    ell, xi, zeta, beta = _params(u)
    caps = np.asarray(caps, dtype=float).reshape(-1)
    if p.m.shape != (ell + 1,) or p.x.shape != caps.shape:
        raise DimensionMismatch("point does not match order or link count")
    v = K.as_violation(p.x, p.m[1:].copy(), p.r, caps, xi, zeta, beta, ell, OFF_TOL, MAX_SWEEPS)
    return float(max(v, abs(p.m[0] - 1.0)))


def _cold_state(v: np.ndarray, L: int, ell: int, beta: float, xi, zeta, caps,
                rho: float) -> ADMMState:
    h = ell // 2
    mm = v[L:L + ell]
    r = v[-1]
    H0, H1 = K.hankel_lift(mm, beta, h)
    W0, _, _ = psd_clamp(H0, OFF_TOL, MAX_SWEEPS)
    W1, _, _ = psd_clamp(H1, OFF_TOL, MAX_SWEEPS)
    Wh = np.array([K.hypograph_kernel(mm[k], r, k + 1, ell, zeta) for k in range(ell)]).reshape(ell, 2)
    xo, ro = K.xs_kernel(v[:L].copy(), r, xi, zeta, caps)
    Wx = np.concatenate([xo, [ro]])
    return ADMMState(W0, np.zeros_like(W0), W1, np.zeros_like(W1), Wh, np.zeros_like(Wh),
                     Wx, np.zeros_like(Wx), rho)


def project_As(p: SourcePoint, u, caps, cfg: ProjectionConfig | None = None,
               warm: ADMMState | None = None) -> ProjectionReport:
    """Euclidean projection of a source triple onto the source set.

    Parameters
    ----------
    p : SourcePoint
        Point to project; ``p.m[0]`` is free on input and 1 on output.
    u : UtilitySpec or similar
        Supplies ``order``, ``xi``, ``zeta`` and ``beta``.
    caps : array_like
        Capacities of the source's first-hop links.
    cfg : ProjectionConfig, optional
    warm : ADMMState, optional
        Splitting state from an earlier call on the same source; it is
        copied, not modified.

    Returns
    -------
    ProjectionReport
        ``result.x`` and ``result.r`` satisfy the rate constraints exactly; the
        moment constraints hold to ``cfg.feas_tol``.  ``state`` can be passed
        back as ``warm``.

    Raises
    ------
    MaxIterationsExceeded
        The report with the last iterate is attached.
    """
    cfg = cfg or ProjectionConfig()
    ell, xi, zeta, beta = _params(u)
    caps = np.asarray(caps, dtype=float).reshape(-1)
    L = caps.shape[0]
    if p.x.shape != (L,) or p.m.shape != (ell + 1,):
        raise DimensionMismatch(
            f"point has |x|={p.x.size}, |m|={p.m.size}; expected {L} and {ell + 1}")
    if not np.all(np.isfinite(p.flat())):
        raise ValueError("point has non-finite entries")
    if xi > caps.sum():
        raise ValueError(f"minimum rate {xi} exceeds the first-hop capacity {caps.sum()}")
    v = np.concatenate([p.x, p.m[1:], [p.r]])
    if warm is None:
        st = _cold_state(v, L, ell, beta, xi, zeta, caps, float(cfg.rho))
    else:
        st = warm.copy()
    GtG = _lift_gram(ell, beta)

    total = 0
    tol = cfg.tol
    while True:
        budget = cfg.max_iter - total
        uvec, it, pres, dres, st.rho = K.as_admm(v, ell, beta, xi, zeta, caps, st.rho, GtG,
                                                 *st.arrays(), tol, budget, OFF_TOL, MAX_SWEEPS)
        total += abs(it)
        point = SourcePoint(st.Wx[:L].copy(), np.concatenate([[1.0], uvec[L:L + ell]]), st.Wx[L])
        viol = float(K.as_violation(point.x, point.m[1:].copy(), point.r, caps, xi, zeta, beta,
                                    ell, OFF_TOL, MAX_SWEEPS))
        report = ProjectionReport(point, total, viol, it > 0, pres, dres, st)
        if it < 0:
            report.converged = False
            raise MaxIterationsExceeded(
                f"source projection stopped after {total} iterations "
                f"(violation {viol:.3g}, residuals {pres:.3g}/{dres:.3g})", report=report)
        if viol <= cfg.feas_tol:
            return report
        tol = tol * 0.01
        if tol < 1e-15 or total >= cfg.max_iter:
            report.converged = False
            raise MaxIterationsExceeded(
                f"source projection reached tolerance but violation is {viol:.3g}", report=report)
