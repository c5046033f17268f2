"""Centralized reference solutions and a brute-force oracle for the original problem.

:func:`centralized_solve` solves the convex moment relaxation either with a
conic solver (``method="conic"``) or by running the primal-dual iteration
on the whole problem at once (``method="pdhg"``).  :func:`brute_force_nonconvex`
searches rate allocations of the non-concave problem on a grid, which the
relaxation must upper-bound.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ncnum.dpda.stepsizes import StepSizes, auto_step_sizes, kappa_vector, tau_diagonal
from ncnum.errors import NotConverged, TooLarge
from ncnum.geometry.projections import ProjectionConfig, SourcePoint, project_As
from ncnum.moments import UtilitySpec, dirac_moments, eval_utility
from ncnum.network import Network, Var, capacity_matrix, capacity_vector, incidence_matrix

__all__ = [
    "ReferenceSolution",
    "OracleSolution",
    "GapReport",
    "SolverConfig",
    "centralized_solve",
    "brute_force_nonconvex",
    "relaxation_gap",
    "flow_paths",
    "relaxation_value",
    "global_pdhg",
]


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`centralized_solve`.

    ``iterations``, ``gamma`` and ``margin`` apply to ``method="pdhg"`` only.
    """

    method: str = "conic"
    tol: float = 1e-8
    feas_tol: float = 1e-6
    iterations: int = 20000
    gamma: float = 0.1
    margin: float = 0.9


@dataclass
class ReferenceSolution:
    """Primal-dual reference for the relaxation.

    ``lam`` follows ``net.capacity_rows`` and ``theta`` follows
    ``net.conservation_rows``; both are multipliers of the Lagrangian
    ``-sum p^T m + lam^T (A x - c) + theta^T B x``.
    """

    x: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    objective: float
    m: dict[str, np.ndarray]
    r: dict[str, float]
    residuals: dict[str, float] = field(default_factory=dict)
    method: str = "conic"


@dataclass
class OracleSolution:
    r: dict[str, float]
    objective: float
    grid_step: float
    x: np.ndarray | None = None
    evaluated: int = 0


@dataclass
class GapReport:
    gap: float
    relative_gap: float
    upper_bound_holds: bool
    tolerance: float


def _utilities(net: Network, utilities) -> dict[str, UtilitySpec]:
    if isinstance(utilities, UtilitySpec):
        return {s: utilities for s in net.sources}
    return {s: utilities[s] for s in net.sources}


def relaxation_value(net: Network, utilities, x) -> float:
    """``sum_s p_s^T m_s`` read from a flattened vector."""
    utilities = _utilities(net, utilities)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for s in net.sources:
        _, mi, _ = net.source_block(s)
        total += float(utilities[s].p @ x[mi])
    return total


def _residuals(net: Network, x: np.ndarray, lam: np.ndarray) -> dict[str, float]:
    A = capacity_matrix(net)
    B = incidence_matrix(net)
    c = capacity_vector(net)
    slack = A @ x - c if A.shape[0] else np.zeros(0)
    return {
        "conservation": float(np.linalg.norm(B @ x)) if B.shape[0] else 0.0,
        "capacity": float(np.maximum(slack, 0).max(initial=0.0)),
        "complementary_slackness": float(np.abs(lam * slack).max(initial=0.0)),
        "negative_rate": float(max(0.0, -x[[k for k, v in enumerate(net.variables) if v.kind == "x"]].min(initial=0.0))),
    }


def _solve_conic(net: Network, utilities: dict[str, UtilitySpec], cfg: SolverConfig) -> ReferenceSolution:
    import cvxpy as cp

    ell = net.order
    h = ell // 2
    X = cp.Variable(net.dim)
    cons = []
    objective = 0
    rate_idx = [k for k, v in enumerate(net.variables) if v.kind == "x"]
    cons.append(X[rate_idx] >= 0)
    for s in net.sources:
        u = utilities[s]
        xi, mi, ri = net.source_block(s)
        m = X[mi]
        r = X[ri]
        caps = np.array([net.links[l].capacity for l in net.source_links[s]])
        H0 = cp.bmat([[m[a + b] for b in range(h + 1)] for a in range(h + 1)])
        H1 = cp.bmat([[u.beta * m[a + b] - m[a + b + 2] for b in range(h)] for a in range(h)])
        cons += [m[0] == 1, H0 >> 0, H1 >> 0, X[xi] <= caps, r == cp.sum(X[xi]),
                 r >= u.xi, r <= u.zeta, m[ell] <= r]
        cons += [m[j] <= cp.power(r, j / ell) for j in range(1, ell)]
        objective = objective + u.p @ m
    A = capacity_matrix(net)
    B = incidence_matrix(net)
    c = capacity_vector(net)
    cap_con = A @ X <= c if A.shape[0] else None
    cons_con = B @ X == 0 if B.shape[0] else None
    cons += [k for k in (cap_con, cons_con) if k is not None]
    prob = cp.Problem(cp.Minimize(-objective), cons)
    try:
        with warnings.catch_warnings():
            # an inaccurate status is reported in residuals["status"] instead
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver="CLARABEL", tol_gap_abs=cfg.tol, tol_gap_rel=cfg.tol,
                       tol_feas=cfg.tol, max_iter=500)
    except cp.error.SolverError as exc:
        raise NotConverged(f"conic solver failed: {exc}") from exc
    if prob.status not in ("optimal", "optimal_inaccurate") or X.value is None:
        raise NotConverged(f"conic solver status {prob.status}")
    x = np.asarray(X.value, dtype=float)
    lam = np.asarray(cap_con.dual_value, dtype=float).reshape(-1) if cap_con is not None else np.zeros(0)
    lam = np.maximum(lam, 0.0)
    theta = np.asarray(cons_con.dual_value, dtype=float).reshape(-1) if cons_con is not None else np.zeros(0)
    return _finish(net, utilities, x, lam, theta, "conic", cfg, prob.status)


def _finish(net, utilities, x, lam, theta, method, cfg, status="optimal") -> ReferenceSolution:
    res = _residuals(net, x, lam)
    res["status"] = status
    sol = ReferenceSolution(
        x=x, lam=lam, theta=theta, objective=relaxation_value(net, utilities, x),
        m={s: x[net.source_block(s)[1]].copy() for s in net.sources},
        r={s: float(x[net.source_block(s)[2]]) for s in net.sources},
        residuals=res, method=method)
    worst = max(res["conservation"], res["capacity"], res["negative_rate"])
    if worst > cfg.feas_tol:
        raise NotConverged(f"{method} reference violates constraints by {worst:.3g}", solution=sol)
    return sol


def global_pdhg(net: Network, utilities, ss: StepSizes, K: int,
                proj_cfg: ProjectionConfig | None = None):
    """Run the primal-dual iteration on the stacked global state.

    Same updates, start point and phase order as :func:`ncnum.dpda.run` but
    with matrix products in place of neighbour messages.

    Returns
    -------
    X : ndarray, shape (K + 1, dim)
        Iterates, row 0 being the start.
    lam : ndarray
        Final prices.
    theta : ndarray
        Final ``gamma * B z``.
    """
    utilities = _utilities(net, utilities)
    A = capacity_matrix(net)
    B = incidence_matrix(net)
    c = capacity_vector(net)
    tau = 1.0 / tau_diagonal(net, ss)
    kap = kappa_vector(net, ss)
    gamma = ss.gamma
    pext = np.zeros(net.dim)
    blocks = {}
    for s in net.sources:
        xi, mi, ri = net.source_block(s)
        pext[mi] = utilities[s].p
        blocks[s] = (xi, mi, ri, np.array([net.links[l].capacity for l in net.source_links[s]]))
    fwd = np.array([k for k, v in enumerate(net.variables)
                    if v.kind == "x" and net.is_forwarding(v.node)], dtype=int)
    x = np.zeros(net.dim)
    for s in net.sources:
        xi, mi, ri, _ = blocks[s]
        x[mi] = dirac_moments(0.0, net.order)
        x[ri] = utilities[s].xi
    z = x.copy()
    lam = np.zeros(A.shape[0])
    warm = {s: None for s in net.sources}
    proj = proj_cfg or ProjectionConfig()
    X = np.zeros((K + 1, net.dim))
    X[0] = x
    for k in range(1, K + 1):
        grad = -pext + A.T @ lam + gamma * (B.T @ (B @ z))
        y = x - tau * grad
        xn = y.copy()
        xn[fwd] = np.maximum(y[fwd], 0.0)
        for s in net.sources:
            xi, mi, ri, caps = blocks[s]
            rep = project_As(SourcePoint(y[xi], y[mi], y[ri]), utilities[s], caps, proj, warm[s])
            warm[s] = rep.state
            xn[xi], xn[mi], xn[ri] = rep.result.x, rep.result.m, rep.result.r
        lam = np.maximum(0.0, lam + kap * (A @ (2 * xn - x) - c))
        z = z - x + 2 * xn
        x = xn
        X[k] = x
    return X, lam, gamma * (B @ z)


def _solve_pdhg(net: Network, utilities: dict[str, UtilitySpec], cfg: SolverConfig,
                ss: StepSizes | None = None) -> ReferenceSolution:
    ss = ss or auto_step_sizes(net, cfg.gamma, cfg.margin)
    X, lam, theta = global_pdhg(net, utilities, ss, cfg.iterations)
    xbar = X[1:].mean(axis=0)
    return _finish(net, utilities, xbar, lam, theta, "pdhg", cfg)


def centralized_solve(net: Network, utilities, cfg: SolverConfig | None = None, *,
                      step_sizes: StepSizes | None = None) -> ReferenceSolution:
    """Solve the moment relaxation with global information.

    Raises
    ------
    NotConverged
        Solver failure, or constraint residuals above ``cfg.feas_tol``.
    """
    cfg = cfg or SolverConfig()
    utilities = _utilities(net, utilities)
    if cfg.method == "conic":
        return _solve_conic(net, utilities, cfg)
    if cfg.method == "pdhg":
        return _solve_pdhg(net, utilities, cfg, step_sizes)
    raise ValueError(f"unknown method {cfg.method!r}")


# -- brute force -------------------------------------------------------------------

def flow_paths(net: Network, s: str) -> list[tuple[Var, ...]]:
    """All routes of the flow of source ``s``, each as the rate variables it uses."""
    i = net.flow_of[s]
    dest = net.flows[i].destination
    out: list[tuple[Var, ...]] = []

    def walk(node: str, hops: tuple[Var, ...]):
        if node == dest:
            out.append(hops)
            return
        for h in net.routing(node, i):
            l = net.link_between(node, h)
            walk(h, hops + (Var("x", node, l, i),))

    for l in net.source_links[s]:
        walk(net.other_end(l, s), (Var("x", s, l, i),))
    return out


def _grid(step: float, top: float, extra) -> np.ndarray:
    n = int(np.floor(top / step + 1e-9))
    pts = set(np.round(np.arange(n + 1) * step, 12).tolist())
    pts.update(float(e) for e in extra if 0 <= e <= top)
    return np.array(sorted(pts))


def brute_force_nonconvex(net: Network, utilities, grid_step: float, *,
                          max_sources: int = 3, max_paths: int = 2,
                          max_combinations: int = 50_000_000, tol: float = 1e-9) -> OracleSolution:
    """Exhaustive grid search over per-path rates of the original problem.

    Each source picks an aggregate rate ``r`` from the grid restricted to
    ``[xi, zeta]`` and, with two routes, a split ``(a, r - a)`` with ``a`` on
    the grid.  The grid holds the multiples of ``grid_step`` plus ``xi``,
    ``zeta`` and the first-hop capacities, so halving the step only adds
    candidates.  Flow conservation holds by construction; capacities are
    checked with tolerance ``tol``.

    Raises
    ------
    TooLarge
        Too many sources, routes or combinations.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    utilities = _utilities(net, utilities)
    if len(net.sources) > max_sources:
        raise TooLarge(f"{len(net.sources)} sources; the oracle handles at most {max_sources}")
    A = capacity_matrix(net)
    c = capacity_vector(net)
    per_source = []
    for s in net.sources:
        u = utilities[s]
        paths = flow_paths(net, s)
        if len(paths) > max_paths:
            raise TooLarge(f"source {s!r} has {len(paths)} routes; the oracle handles at most {max_paths}")
        extra = [u.xi, u.zeta] + [net.links[l].capacity for l in net.source_links[s]]
        G = _grid(grid_step, u.zeta, extra)
        totals = G[(G >= u.xi - tol) & (G <= u.zeta + tol)]
        if u.xi == u.zeta:
            totals = np.array([u.xi])
        P = np.zeros((len(paths), net.dim))
        for k, path in enumerate(paths):
            for v in path:
                P[k, net.index[v]] += 1.0
        if len(paths) == 1:
            rates = totals[:, None]
        else:
            rows = [(a, r - a) for r in totals for a in G if a <= r + tol]
            if u.xi == u.zeta:
                rows = [(a, u.xi - a) for a in G if a <= u.xi + tol]
            rates = np.array(rows, dtype=float).reshape(-1, 2)
            rates = np.maximum(rates, 0.0)
        X = rates @ P
        xi, _, _ = net.source_block(s)
        caps = np.array([net.links[l].capacity for l in net.source_links[s]])
        ok = np.all(X[:, xi] <= caps + tol, axis=1)
        X = X[ok]
        r = X[:, xi].sum(axis=1)
        per_source.append((s, X, r, eval_utility(u, np.maximum(r, 0.0))))
    total = int(np.prod([len(p[2]) for p in per_source]))
    if total > max_combinations:
        raise TooLarge(f"{total} combinations exceed the cap of {max_combinations}")
    if total == 0:
        raise ValueError("no grid point satisfies the rate bounds and first-hop capacities")

    loads = [p[1] @ A.T if A.shape[0] else np.zeros((len(p[2]), 0)) for p in per_source]
    best_val = -np.inf
    best_idx = None
    first_load, rest = loads[0], loads[1:]
    first_u, rest_u = per_source[0][3], [p[3] for p in per_source[1:]]
    # combine all but the first source once, then sweep the first in chunks
    if rest:
        grids = np.meshgrid(*[np.arange(len(u)) for u in rest_u], indexing="ij")
        idx_rest = np.stack([g.ravel() for g in grids], axis=1)
        load_rest = sum(L[idx_rest[:, k]] for k, L in enumerate(rest))
        util_rest = sum(u[idx_rest[:, k]] for k, u in enumerate(rest_u))
    else:
        idx_rest = np.zeros((1, 0), dtype=int)
        load_rest = np.zeros((1, A.shape[0]))
        util_rest = np.zeros(1)
    chunk = max(1, 2_000_000 // max(1, len(util_rest)))
    for start in range(0, len(first_u), chunk):
        stop = min(start + chunk, len(first_u))
        load = first_load[start:stop, None, :] + load_rest[None, :, :]
        feas = np.all(load <= c + tol, axis=2) if A.shape[0] else np.ones((stop - start, len(util_rest)), bool)
        val = np.where(feas, first_u[start:stop, None] + util_rest[None, :], -np.inf)
        k = int(np.argmax(val))
        if val.flat[k] > best_val:
            a, b = divmod(k, len(util_rest))
            best_val = float(val.flat[k])
            best_idx = (start + a, b)
    if best_idx is None or not np.isfinite(best_val):
        raise ValueError("no grid allocation satisfies the capacities")
    choice = [best_idx[0]] + list(idx_rest[best_idx[1]])
    x = sum(p[1][j] for p, j in zip(per_source, choice))
    r = {p[0]: float(p[2][j]) for p, j in zip(per_source, choice)}
    for s in net.sources:
        _, mi, ri = net.source_block(s)
        x[mi] = dirac_moments(r[s] ** (1.0 / net.order), net.order)
        x[ri] = r[s]
    return OracleSolution(r=r, objective=best_val, grid_step=grid_step, x=x, evaluated=total)


def relaxation_gap(ref: ReferenceSolution, oracle: OracleSolution, tol: float = 1e-6) -> GapReport:
    """``ref.objective - oracle.objective``; the relaxation must not fall below the oracle."""
    gap = ref.objective - oracle.objective
    rel = gap / max(1.0, abs(ref.objective))
    return GapReport(gap=float(gap), relative_gap=float(rel), upper_bound_holds=bool(gap >= -tol),
                     tolerance=tol)

