"""Round-synchronous message-passing simulation of the distributed primal-dual method.

Every round runs four phases.  Within a phase each node reads only the
snapshot published at the end of the previous phase and writes only its own
state, so the order in which nodes are visited is immaterial.

A  primal step.  Sources take a gradient step on their moments and project
   their triple onto the source set; forwarding nodes take a projected step
   on each outgoing rate using their own and their neighbours' link prices
   and divergence terms ``u``.
B  price step.  Each forwarding node raises or lowers ``lambda_{b,l}`` from
   the extrapolated load ``2 x^{k+1} - x^k`` on ``l`` (its own rates, plus the
   neighbour's rates when ``l`` is bidirectional).
C  ``z <- z - x^k + 2 x^{k+1}`` for every owned rate.
D  each forwarding node recomputes ``u_{i,b} = sum_out z - sum_in z`` per flow
   from its own and its upstream neighbours' ``z`` and publishes it.

With ``theta^k = gamma B z^k`` the iteration is the primal-dual hybrid
gradient method on the Lagrangian ``-sum p^T m + lambda^T (A x - c) + theta^T B x``.
All cross-node reads go through an :class:`Inbox`, which records them in the
:class:`MessageLog` for the locality audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ncnum.dpda.stepsizes import StepSizes, validate_step_sizes
from ncnum.errors import DimensionMismatch, MissingNeighborData, StepSizeInvalid
from ncnum.geometry.projections import (
    ADMMState,
    ProjectionConfig,
    SourcePoint,
    project_As,
)
from ncnum.moments import UtilitySpec, dirac_moments
from ncnum.network import Network, Var, capacity_matrix, capacity_vector, incidence_matrix

__all__ = [
    "SourceNodeState",
    "ForwardNodeState",
    "Inbox",
    "MessageLog",
    "RunTrace",
    "InitialPoint",
    "source_update",
    "forward_update",
    "price_update",
    "z_update",
    "u_update",
    "build_states",
    "run",
    "trace_metrics",
]


# -- node state ---------------------------------------------------------------

@dataclass
class SourceNodeState:
    """State of a source node.

    The static fields (``links``, ``nbr``, ...) are the node's local view of
    the topology: for each first-hop link, the neighbour on the other end,
    whether it forwards, and whether the link is bidirectional.
    """

    node: str
    flow: str
    links: tuple[str, ...]
    nbr: tuple[str, ...]
    nbr_forwards: tuple[bool, ...]
    bidir: tuple[bool, ...]
    caps: np.ndarray
    x: np.ndarray
    m: np.ndarray
    r: float
    z: np.ndarray
    x_prev: np.ndarray
    warm: ADMMState | None = field(default=None, repr=False)
    proj_iterations: int = 0
    proj_violation: float = 0.0

    def publish(self) -> dict:
        out = {}
        for k, l in enumerate(self.links):
            out[("x", self.flow, l)] = self.x[k]
            out[("xp", self.flow, l)] = self.x_prev[k]
            out[("z", self.flow, l)] = self.z[k]
        return out

    def copy(self) -> "SourceNodeState":
        return SourceNodeState(self.node, self.flow, self.links, self.nbr, self.nbr_forwards,
                               self.bidir, self.caps, self.x.copy(), self.m.copy(), self.r,
                               self.z.copy(), self.x_prev.copy(), self.warm,
                               self.proj_iterations, self.proj_violation)


@dataclass
class ForwardNodeState:
    """State of a forwarding node.

    ``keys[k] = (flow, link)`` names the k-th owned rate; ``nbr[k]`` is the
    receiving neighbour.  ``flow_out[i]`` lists owned-rate positions of flow
    ``i`` and ``flow_in[i]`` the ``(neighbour, link)`` pairs it arrives on.
    ``link_out[l]`` lists owned-rate positions on ``l`` and ``link_in[l]`` the
    flows the neighbour sends back over ``l``.
    """

    node: str
    keys: tuple[tuple[str, str], ...]
    nbr: tuple[str, ...]
    nbr_forwards: tuple[bool, ...]
    bidir: tuple[bool, ...]
    flows: tuple[str, ...]
    flow_out: Mapping[str, tuple[int, ...]]
    flow_in: Mapping[str, tuple[tuple[str, str], ...]]
    links: tuple[str, ...]
    link_nbr: Mapping[str, str]
    link_bidir: Mapping[str, bool]
    link_out: Mapping[str, tuple[int, ...]]
    link_in: Mapping[str, tuple[str, ...]]
    caps: Mapping[str, float]
    x: np.ndarray
    x_prev: np.ndarray
    z: np.ndarray
    u: dict[str, float]
    lam: dict[str, float]

    def publish(self) -> dict:
        out = {}
        for k, (i, l) in enumerate(self.keys):
            out[("x", i, l)] = self.x[k]
            out[("xp", i, l)] = self.x_prev[k]
            out[("z", i, l)] = self.z[k]
        for i in self.flows:
            out[("u", i)] = self.u[i]
        for l in self.links:
            out[("lam", l)] = self.lam[l]
        return out

    def copy(self) -> "ForwardNodeState":
        c = ForwardNodeState(**{f: getattr(self, f) for f in self.__dataclass_fields__})
        c.x, c.x_prev, c.z = self.x.copy(), self.x_prev.copy(), self.z.copy()
        c.u, c.lam = dict(self.u), dict(self.lam)
        return c


# -- messaging ------------------------------------------------------------------

class Inbox:
    """Read access to the published snapshot, recording every cross-node read."""

    __slots__ = ("reader", "_boards", "_reads")

    def __init__(self, reader: str, boards: Mapping[str, Mapping], reads: set | None = None):
        self.reader = reader
        self._boards = boards
        self._reads = reads

    def get(self, owner: str, key: tuple):
        try:
            value = self._boards[owner][key]
        except KeyError:
            raise MissingNeighborData(f"{self.reader!r} found no {key} published by {owner!r}") from None
        if self._reads is not None and owner != self.reader:
            self._reads.add((self.reader, owner, key))
        return value


class MessageLog:
    """Per-round record of cross-node reads.

    Rounds usually repeat the same read pattern, so patterns are interned:
    ``rounds[k]`` is an index into ``patterns``.
    """

    def __init__(self):
        self.patterns: list[frozenset] = []
        self._ids: dict[frozenset, int] = {}
        self.rounds: list[int] = []

    def record(self, reads: set) -> None:
        key = frozenset(reads)
        idx = self._ids.get(key)
        if idx is None:
            idx = self._ids[key] = len(self.patterns)
            self.patterns.append(key)
        self.rounds.append(idx)

    def __len__(self) -> int:
        return len(self.rounds)

    def reads(self, k: int) -> frozenset:
        """Reads ``(reader, owner, key)`` of round ``k`` (0 is initialization)."""
        return self.patterns[self.rounds[k]]

    def nonlocal_reads(self, net: Network) -> list[tuple[int, tuple]]:
        """Every ``(round, read)`` whose owner is neither the reader nor a 1-hop neighbour."""
        bad_by_pattern = {}
        for p, reads in enumerate(self.patterns):
            bad_by_pattern[p] = [rd for rd in reads
                                 if rd[1] != rd[0] and rd[1] not in net.neighbors[rd[0]]]
        out = []
        for k, p in enumerate(self.rounds):
            out.extend((k, rd) for rd in bad_by_pattern[p])
        return out

    def total_reads(self) -> int:
        return sum(len(self.patterns[p]) for p in self.rounds)


# -- update rules ----------------------------------------------------------------

def source_update(state: SourceNodeState, inbox: Inbox, ss: StepSizes, u: UtilitySpec,
                  cfg: ProjectionConfig | None = None) -> SourceNodeState:
    """Primal step of a source: gradient step, then projection onto the source set.

    The pre-projection point is
    ``x_l - tau_s (lambda_{c,l} [l bidirectional, c forwards] - gamma u_{i,c} [c forwards])``
    for each first-hop link ``l`` to neighbour ``c``, ``m + tau_s p`` and ``r``.
    """
    tau = ss.tau_s[state.node]
    g = ss.gamma
    x0 = state.x.copy()
    for k, l in enumerate(state.links):
        c = state.nbr[k]
        if state.nbr_forwards[k]:
            grad = -g * inbox.get(c, ("u", state.flow))
            if state.bidir[k]:
                grad += inbox.get(c, ("lam", l))
            x0[k] -= tau * grad
    pre = SourcePoint(x0, state.m + tau * u.p, state.r)
    rep = project_As(pre, u, state.caps, cfg, warm=state.warm)
    out = state.copy()
    out.x_prev = state.x.copy()
    out.x = rep.result.x
    out.m = rep.result.m
    out.r = rep.result.r
    out.warm = rep.state
    out.proj_iterations = rep.iterations
    out.proj_violation = rep.max_constraint_violation
    return out


def forward_update(state: ForwardNodeState, inbox: Inbox, ss: StepSizes,
                   tau: Sequence[float]) -> ForwardNodeState:
    """Projected primal step on every rate the node sends.

    ``x_{i,b,l} <- max(0, x - tau (lambda_{b,l} + [l bidirectional, c forwards] lambda_{c,l}
    + gamma (u_{i,b} - [c forwards] u_{i,c})))`` with ``c`` the receiver.
    ``tau`` lists the node's step sizes in ``state.keys`` order.
    """
    g = ss.gamma
    out = state.copy()
    out.x_prev = state.x.copy()
    for k, (i, l) in enumerate(state.keys):
        c = state.nbr[k]
        grad = state.lam[l] + g * state.u[i]
        if state.nbr_forwards[k]:
            grad -= g * inbox.get(c, ("u", i))
            if state.bidir[k]:
                grad += inbox.get(c, ("lam", l))
        out.x[k] = max(0.0, state.x[k] - tau[k] * grad)
    return out


def price_update(state: ForwardNodeState, inbox: Inbox, ss: StepSizes,
                 caps: Mapping[str, float] | None = None) -> ForwardNodeState:
    """Projected ascent on each link price from the extrapolated load ``2 x^{k+1} - x^k``."""
    caps = state.caps if caps is None else caps
    out = state.copy()
    for l in state.links:
        load = 0.0
        for k in state.link_out[l]:
            load += 2.0 * state.x[k] - state.x_prev[k]
        if state.link_bidir[l]:
            c = state.link_nbr[l]
            for i in state.link_in[l]:
                load += 2.0 * inbox.get(c, ("x", i, l)) - inbox.get(c, ("xp", i, l))
        out.lam[l] = max(0.0, state.lam[l] + ss.kappa[(state.node, l)] * (load - caps[l]))
    return out


def z_update(state, prev_x=None, new_x=None):
    """``z <- z - x^k + 2 x^{k+1}``; defaults to the state's own ``x_prev`` and ``x``."""
    prev_x = state.x_prev if prev_x is None else np.asarray(prev_x, dtype=float)
    new_x = state.x if new_x is None else np.asarray(new_x, dtype=float)
    out = state.copy()
    out.z = state.z - prev_x + 2.0 * new_x
    return out


def u_update(state: ForwardNodeState, inbox: Inbox) -> ForwardNodeState:
    """``u_{i,b} = sum of own z_{i,b,l} - sum of upstream z_{i,c,l}`` for each flow ``i``."""
    out = state.copy()
    for i in state.flows:
        val = 0.0
        for k in state.flow_out[i]:
            val += state.z[k]
        for c, l in state.flow_in[i]:
            val -= inbox.get(c, ("z", i, l))
        out.u[i] = val
    return out


# -- construction ---------------------------------------------------------------

@dataclass
class InitialPoint:
    """Starting iterate; ``None`` fields take the defaults.

    Defaults are ``x = 0``, ``m = (1, 0, ..., 0)``, ``r = xi`` and ``lambda = 0``.
    ``x`` is a full flattened vector (only the rate entries are used unless
    ``use_moments`` is set, in which case ``m`` and ``r`` come from it too).
    """

    x: np.ndarray | None = None
    use_moments: bool = False


def _utilities_for(net: Network, utilities) -> dict[str, UtilitySpec]:
    if isinstance(utilities, UtilitySpec):
        return {s: utilities for s in net.sources}
    out = dict(utilities)
    missing = [s for s in net.sources if s not in out]
    if missing:
        raise DimensionMismatch(f"no utility for sources {missing}")
    for s, u in out.items():
        if u.order != net.order:
            raise DimensionMismatch(f"utility of {s!r} has order {u.order}, network uses {net.order}")
    return out


def build_states(net: Network, utilities, init: InitialPoint | None = None):
    """Initial node states before the first ``u`` exchange."""
    utilities = _utilities_for(net, utilities)
    x0 = None if init is None or init.x is None else np.asarray(init.x, dtype=float)
    if x0 is not None and x0.shape != (net.dim,):
        raise DimensionMismatch(f"initial x has shape {x0.shape}, expected ({net.dim},)")
    states: dict[str, object] = {}
    for s in net.sources:
        i = net.flow_of[s]
        ls = net.source_links[s]
        xi, mi, ri = net.source_block(s)
        u = utilities[s]
        x = np.zeros(len(ls)) if x0 is None else x0[xi].copy()
        if x0 is not None and init.use_moments:
            m, r = x0[mi].copy(), float(x0[ri])
        else:
            m, r = dirac_moments(0.0, net.order), u.xi
        nbr = tuple(net.other_end(l, s) for l in ls)
        states[s] = SourceNodeState(
            node=s, flow=i, links=ls, nbr=nbr,
            nbr_forwards=tuple(net.is_forwarding(c) for c in nbr),
            bidir=tuple(net.links[l].bidirectional for l in ls),
            caps=np.array([net.links[l].capacity for l in ls]),
            x=x, m=m, r=r, z=x.copy(), x_prev=x.copy())
    for b in net.forwarding:
        keys = tuple((v.flow, v.link) for v in net.variables if v.kind == "x" and v.node == b)
        nbr = tuple(net.other_end(l, b) for _, l in keys)
        flows = net.flows_at[b]
        x = np.zeros(len(keys))
        if x0 is not None:
            x = np.array([x0[net.index[Var("x", b, l, i)]] for i, l in keys])
        links = net.node_links[b]
        states[b] = ForwardNodeState(
            node=b, keys=keys, nbr=nbr,
            nbr_forwards=tuple(net.is_forwarding(c) for c in nbr),
            bidir=tuple(net.links[l].bidirectional for _, l in keys),
            flows=flows,
            flow_out={i: tuple(k for k, (f, _) in enumerate(keys) if f == i) for i in flows},
            flow_in={i: tuple((net.other_end(l, b), l) for l in net.in_links[(b, i)]) for i in flows},
            links=links,
            link_nbr={l: net.other_end(l, b) for l in links},
            link_bidir={l: net.links[l].bidirectional for l in links},
            link_out={l: tuple(k for k, (_, ll) in enumerate(keys) if ll == l) for l in links},
            link_in={l: net.in_flows[(b, l)] for l in links},
            caps={l: net.links[l].capacity for l in links},
            x=x, x_prev=x.copy(), z=x.copy(),
            u={i: 0.0 for i in flows}, lam={l: 0.0 for l in links})
    return states, utilities


def _flatten(net: Network, states, index_maps) -> np.ndarray:
    out = np.zeros(net.dim)
    for s in net.sources:
        xi, mi, ri = index_maps[s]
        st = states[s]
        out[xi] = st.x
        out[mi] = st.m
        out[ri] = st.r
    for b in net.forwarding:
        out[index_maps[b]] = states[b].x
    return out


# -- trace ------------------------------------------------------------------------

@dataclass
class RunTrace:
    """Iterates of a run and the residuals of their running averages.

    ``X[k]`` is the flattened iterate ``x^k`` (row 0 is the start).  Row
    ``K - 1`` of the metric arrays describes ``xbar^K = mean(X[1:K+1])``.
    """

    net: Network
    utilities: dict[str, UtilitySpec]
    X: np.ndarray
    lam: np.ndarray            # (K+1, rows) prices after each round
    theta: np.ndarray          # (K+1, conservation rows) gamma * B z^k
    gamma: float
    proj_iterations: np.ndarray
    proj_violation: np.ndarray
    k: np.ndarray = field(init=False)
    xbar: np.ndarray = field(init=False)
    utility: np.ndarray = field(init=False)
    conservation: np.ndarray = field(init=False)
    capacity_distance: np.ndarray = field(init=False)
    rbar: np.ndarray = field(init=False)
    link_load: np.ndarray = field(init=False)

    def __post_init__(self):
        K = self.X.shape[0] - 1
        self.k = np.arange(1, K + 1)
        self.xbar = running_average(self.X)
        m = trace_metrics(self.net, self.utilities, self.xbar)
        self.utility = m["utility"]
        self.conservation = m["conservation"]
        self.capacity_distance = m["capacity_distance"]
        self.rbar = m["rbar"]
        self.link_load = m["link_load"]

    @property
    def K(self) -> int:
        return self.X.shape[0] - 1

    def final(self) -> dict:
        if self.K == 0:
            return {}
        return {
            "K": self.K,
            "utility": float(self.utility[-1]),
            "conservation_residual": float(self.conservation[-1]),
            "capacity_distance": float(self.capacity_distance[-1]),
            "rbar": {s: float(v) for s, v in zip(self.net.sources, self.rbar[-1])},
        }


def running_average(X: np.ndarray) -> np.ndarray:
    """``xbar^K = (1/K) sum_{k=1..K} x^k`` for ``K = 1..len(X)-1``."""
    if X.shape[0] <= 1:
        return np.zeros((0, X.shape[1]))
    return np.cumsum(X[1:], axis=0) / np.arange(1, X.shape[0])[:, None]


def trace_metrics(net: Network, utilities, xbar: np.ndarray) -> dict[str, np.ndarray]:
    """Residual columns for a stack of averaged iterates (one row per ``K``).

    ``utility`` is ``sum_s p_s^T mbar_s``; ``conservation`` is ``||B xbar||``;
    ``capacity_distance`` sums ``max(load - c_l, 0)`` over capacity rows;
    ``link_load`` is the total averaged rate on each link in both directions.
    """
    utilities = _utilities_for(net, utilities)
    xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
    if xbar.shape[1] != net.dim:
        raise DimensionMismatch(f"expected {net.dim} columns, got {xbar.shape[1]}")
    B = incidence_matrix(net)
    A = capacity_matrix(net)
    c = capacity_vector(net)
    util = np.zeros(xbar.shape[0])
    rbar = np.zeros((xbar.shape[0], len(net.sources)))
    for k, s in enumerate(net.sources):
        _, mi, ri = net.source_block(s)
        util += xbar[:, mi] @ utilities[s].p
        rbar[:, k] = xbar[:, ri]
    cons = np.linalg.norm(xbar @ B.T, axis=1) if B.shape[0] else np.zeros(xbar.shape[0])
    capd = np.maximum(xbar @ A.T - c, 0.0).sum(axis=1) if A.shape[0] else np.zeros(xbar.shape[0])
    L = np.zeros((net.dim, len(net.links)))
    lidx = {l: k for k, l in enumerate(net.links)}
    for j, v in enumerate(net.variables):
        if v.kind == "x":
            L[j, lidx[v.link]] = 1.0
    return {"utility": util, "conservation": cons, "capacity_distance": capd,
            "rbar": rbar, "link_load": xbar @ L}


# -- driver ------------------------------------------------------------------------

def run(net: Network, utilities, ss: StepSizes, init: InitialPoint | None = None, K: int = 100,
        *, override: bool = False, strict: bool = True, log_messages: bool = True,
        node_order: Sequence[str] | None = None, proj_cfg: ProjectionConfig | None = None,
        ) -> tuple[RunTrace, MessageLog]:
    """Run ``K`` rounds.

    Parameters
    ----------
    net : Network
    utilities : UtilitySpec or mapping
        One spec for every source, or a mapping source -> spec.
    ss : StepSizes
        Validated first (``strict`` selects the local conditions as well) unless
        ``override`` is set.
    init : InitialPoint, optional
    K : int
        Number of rounds (0 records only the initial state).
    log_messages : bool
        Record cross-node reads in the returned :class:`MessageLog`.
    node_order : sequence of str, optional
        Order in which nodes are visited within each phase.  Any permutation
        gives the same result.

    Raises
    ------
    StepSizeInvalid
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if not override:
        check = validate_step_sizes(net, ss, strict=strict)
        if not check.ok:
            raise StepSizeInvalid(
                f"{len(check.violations)} step-size condition(s) violated; first: {check.violations[0]}",
                check.violations)
    states, utilities = build_states(net, utilities, init)
    order = tuple(node_order) if node_order is not None else tuple(net.sources) + tuple(net.forwarding)
    if sorted(order) != sorted(net.sources + net.forwarding):
        raise ValueError("node_order must be a permutation of the source and forwarding nodes")
    fwd_order = [n for n in order if isinstance(states[n], ForwardNodeState)]
    tau_of = {b: np.array([ss.tau[Var("x", b, l, i)] for i, l in states[b].keys]) for b in net.forwarding}
    index_maps: dict[str, object] = {s: net.source_block(s) for s in net.sources}
    for b in net.forwarding:
        index_maps[b] = np.array([net.index[Var("x", b, l, i)] for i, l in states[b].keys], dtype=int)
    rows = net.capacity_rows
    B = incidence_matrix(net)

    log = MessageLog()
    X = np.zeros((K + 1, net.dim))
    LAM = np.zeros((K + 1, len(rows)))
    Z = np.zeros(net.dim)
    THETA = np.zeros((K + 1, B.shape[0]))
    PIT = np.zeros((K + 1, len(net.sources)), dtype=np.int64)
    PVI = np.zeros((K + 1, len(net.sources)))

    boards = {n: states[n].publish() for n in order}

    def phase(fn, nodes, reads):
        nonlocal boards
        new = {n: fn(n, Inbox(n, boards, reads)) for n in nodes}
        states.update(new)
        boards = dict(boards)
        for n in nodes:
            boards[n] = states[n].publish()

    def record(k, reads):
        X[k] = _flatten(net, states, index_maps)
        LAM[k] = [states[b].lam[l] for b, l in rows]
        for s in net.sources:
            xi, _, _ = index_maps[s]
            Z[xi] = states[s].z
        for b in net.forwarding:
            Z[index_maps[b]] = states[b].z
        THETA[k] = ss.gamma * (B @ Z) if B.shape[0] else 0.0
        for j, s in enumerate(net.sources):
            PIT[k, j] = states[s].proj_iterations
            PVI[k, j] = states[s].proj_violation
        if log_messages:
            log.record(reads)

    reads: set | None = set() if log_messages else None
    phase(lambda n, ib: u_update(states[n], ib), fwd_order, reads)
    record(0, reads)

    for k in range(1, K + 1):
        reads = set() if log_messages else None

        def primal(n, ib):
            st = states[n]
            if isinstance(st, SourceNodeState):
                return source_update(st, ib, ss, utilities[n], proj_cfg)
            return forward_update(st, ib, ss, tau_of[n])

        phase(primal, order, reads)
        phase(lambda n, ib: price_update(states[n], ib, ss), fwd_order, reads)
        phase(lambda n, ib: z_update(states[n]), order, reads)
        phase(lambda n, ib: u_update(states[n], ib), fwd_order, reads)
        record(k, reads)

    trace = RunTrace(net, utilities, X, LAM, THETA, ss.gamma, PIT, PVI)
    return trace, log
