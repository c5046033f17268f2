"""Step sizes of the primal-dual iteration and their validity conditions.

Two families of conditions are checked.

``literal``
    Per source ``1/tau_s - gamma (4 + d_s) >= 0`` and per forwarding rate
    ``(1/kappa_{b,l}) (1/tau_{i,b,l} - gamma (4 + d_{i,b,l})) >= m_l + 1``.
``local``
    A Gershgorin bound on ``D_tau - gamma B^T B - A^T diag(kappa) A`` built
    from 1-hop information.  For every rate column ``j``:
    ``d_j >= sum_{k != j} |(B^T B)_{jk}| - (B^T B)_{jj}`` and
    ``1/tau_j >= gamma (4 + d_j) + sum_{rows r containing j} kappa_r nnz(r)``.

The literal pair assumes every rate enters a single capacity row and every
source column is free of capacity rows.  Neither holds when a bidirectional
link joins two forwarding nodes (the rate enters both endpoints' rows) or
when a source link is bidirectional, so ``strict=True`` adds the local
conditions, which imply the certificate ``Q(A, B) >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ncnum.network import Network, Var, capacity_matrix, incidence_matrix

__all__ = [
    "StepSizes",
    "Violation",
    "StepCheck",
    "LocalBounds",
    "local_bounds",
    "validate_step_sizes",
    "auto_step_sizes",
    "tau_diagonal",
    "kappa_vector",
]

BOUNDARY_RTOL = 1e-12


@dataclass
class StepSizes:
    """Step sizes ``gamma``, ``tau``, ``kappa`` and the Gershgorin slacks ``d``.

    ``tau`` and ``d`` are keyed by the forwarding-rate :class:`~ncnum.network.Var`;
    ``kappa`` by the capacity row ``(b, l)``.
    """

    gamma: float
    tau_s: dict[str, float] = field(default_factory=dict)
    tau: dict[Var, float] = field(default_factory=dict)
    kappa: dict[tuple[str, str], float] = field(default_factory=dict)
    d_s: dict[str, float] = field(default_factory=dict)
    d: dict[Var, float] = field(default_factory=dict)

    def scaled(self, factor: float) -> "StepSizes":
        """Copy with every ``tau`` multiplied by ``factor``."""
        return StepSizes(self.gamma, {k: v * factor for k, v in self.tau_s.items()},
                         {k: v * factor for k, v in self.tau.items()}, dict(self.kappa),
                         dict(self.d_s), dict(self.d))


@dataclass(frozen=True)
class Violation:
    condition: str  # "literal-source", "literal-rate", "local-source", "local-rate", "domain"
    key: object
    lhs: float
    rhs: float

    def __str__(self) -> str:
        return f"{self.condition} at {self.key}: {self.lhs:.6g} < {self.rhs:.6g}"


@dataclass
class StepCheck:
    ok: bool
    violations: list[Violation]

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class LocalBounds:
    """Per-column quantities entering the local conditions.

    ``omega`` is the diagonal of ``B^T B``, ``offdiag`` the off-diagonal
    absolute row sum of ``B^T B`` and ``rows`` the capacity rows containing
    each column with their nonzero counts.
    """

    omega: np.ndarray
    offdiag: np.ndarray
    rows: tuple[tuple[tuple[int, int], ...], ...]  # per column: (row index, nnz)


def local_bounds(net: Network) -> LocalBounds:
    B = incidence_matrix(net)
    A = capacity_matrix(net)
    G = B.T @ B
    omega = np.diag(G).copy()
    offdiag = np.abs(G).sum(axis=1) - np.abs(omega)
    nnz = (A != 0).sum(axis=1)
    rows = tuple(tuple((int(r), int(nnz[r])) for r in np.flatnonzero(A[:, j]))
                 for j in range(net.dim))
    return LocalBounds(omega, offdiag, rows)


def _source_columns(net: Network, s: str) -> list[int]:
    xi, _, _ = net.source_block(s)
    return list(xi)


def _capacity_load(lb: LocalBounds, j: int, kappa_rows: np.ndarray) -> float:
    return float(sum(kappa_rows[r] * n for r, n in lb.rows[j]))


def validate_step_sizes(net: Network, ss: StepSizes, *, strict: bool = True,
                        bounds: LocalBounds | None = None) -> StepCheck:
    """Check the step sizes against the literal (and, if ``strict``, local) conditions.

    Violations are collected, never raised.  Equality passes up to a relative
    ``1e-12`` so boundary values computed in floating point are accepted.
    """
    out: list[Violation] = []
    g = ss.gamma

    def need(cond, key, lhs, rhs):
        if lhs < rhs - BOUNDARY_RTOL * max(1.0, abs(rhs)):
            out.append(Violation(cond, key, float(lhs), float(rhs)))

    if not g > 0:
        out.append(Violation("domain", "gamma", g, 0.0))
    rate_vars = [v for v in net.variables if v.kind == "x" and net.is_forwarding(v.node)]
    for s in net.sources:
        for name, table in (("tau_s", ss.tau_s), ("d_s", ss.d_s)):
            val = table.get(s)
            if val is None or not val > 0:
                out.append(Violation("domain", (name, s), float(val or 0.0), 0.0))
    for v in rate_vars:
        for name, table in (("tau", ss.tau), ("d", ss.d)):
            val = table.get(v)
            if val is None or not val > 0:
                out.append(Violation("domain", (name, str(v)), float(val or 0.0), 0.0))
    for row in net.capacity_rows:
        val = ss.kappa.get(row)
        if val is None or not val > 0:
            out.append(Violation("domain", ("kappa", row), float(val or 0.0), 0.0))
    if out:
        return StepCheck(False, out)

    for s in net.sources:
        need("literal-source", s, 1.0 / ss.tau_s[s], g * (4.0 + ss.d_s[s]))
    for v in rate_vars:
        kap = ss.kappa[(v.node, v.link)]
        need("literal-rate", str(v), (1.0 / ss.tau[v] - g * (4.0 + ss.d[v])) / kap, net.m_l(v.link) + 1)

    if strict:
        lb = bounds or local_bounds(net)
        kap_rows = np.array([ss.kappa[r] for r in net.capacity_rows])
        for s in net.sources:
            for j in _source_columns(net, s):
                need("local-source-slack", s, ss.d_s[s], lb.offdiag[j] - lb.omega[j])
                need("local-source", s, 1.0 / ss.tau_s[s],
                     g * (4.0 + ss.d_s[s]) + _capacity_load(lb, j, kap_rows))
        for v in rate_vars:
            j = net.index[v]
            need("local-rate-slack", str(v), ss.d[v], lb.offdiag[j] - lb.omega[j])
            need("local-rate", str(v), 1.0 / ss.tau[v],
                 g * (4.0 + ss.d[v]) + _capacity_load(lb, j, kap_rows))
    return StepCheck(not out, out)


def auto_step_sizes(net: Network, gamma: float, margin: float = 0.9, *,
                    strict: bool = True) -> StepSizes:
    """Step sizes at ``margin`` times the boundary of the conditions.

    ``kappa = 1``; ``d = max(4, local slack need)`` (``d = 4`` when ``strict``
    is false); each ``tau`` is ``margin`` divided by the largest right-hand
    side among the conditions it enters.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not 0 < margin <= 1:
        raise ValueError("margin must lie in (0, 1]")
    lb = local_bounds(net)
    kappa = {row: 1.0 for row in net.capacity_rows}
    kap_rows = np.ones(len(net.capacity_rows))
    ss = StepSizes(float(gamma), kappa=kappa)
    for s in net.sources:
        cols = _source_columns(net, s)
        d = 4.0
        if strict and cols:
            d = max(d, max(lb.offdiag[j] - lb.omega[j] for j in cols))
        need = gamma * (4.0 + d)
        if strict:
            for j in cols:
                need = max(need, gamma * (4.0 + d) + _capacity_load(lb, j, kap_rows))
        ss.d_s[s] = float(d)
        ss.tau_s[s] = margin / need
    for v in net.variables:
        if v.kind != "x" or not net.is_forwarding(v.node):
            continue
        j = net.index[v]
        d = max(4.0, lb.offdiag[j] - lb.omega[j]) if strict else 4.0
        need = gamma * (4.0 + d) + kappa[(v.node, v.link)] * (net.m_l(v.link) + 1)
        if strict:
            need = max(need, gamma * (4.0 + d) + _capacity_load(lb, j, kap_rows))
        ss.d[v] = float(d)
        ss.tau[v] = margin / need
    return ss


def tau_diagonal(net: Network, ss: StepSizes) -> np.ndarray:
    """``1/tau`` for every flattened column (a source's ``tau_s`` covers its whole block)."""
    out = np.empty(net.dim)
    for k, v in enumerate(net.variables):
        if net.kinds[v.node] == "source":
            out[k] = 1.0 / ss.tau_s[v.node]
        else:
            out[k] = 1.0 / ss.tau[v]
    return out


def kappa_vector(net: Network, ss: StepSizes) -> np.ndarray:
    return np.array([ss.kappa[row] for row in net.capacity_rows])
