"""Network model: nodes, links, flows, routing and the derived index sets.

A network is described by a :class:`NetworkSpec` and validated into an
immutable :class:`Network` by :func:`build_network`.  The validated form
carries every index set used by the relaxation and by the distributed
algorithm (incident links, per-flow out/in links, per-link flow sets, the
neighbour map) together with a fixed flattening of the decision vector.

Flattened ordering
------------------
Sources come first, in node order; each contributes its first-hop rates
``x[s, l]`` (``l`` in link order), then the moments ``m[s, 0..order]``, then
the aggregate rate ``r[s]``.  Forwarding rates follow, grouped by
``(b, l, i)`` with nodes, links and flows each in declaration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ncnum.errors import (
    DanglingNextHop,
    FlowBijectionViolation,
    NetworkError,
    NonPositiveCapacity,
    RoutingError,
    UnknownLink,
)

__all__ = [
    "NODE_KINDS",
    "Link",
    "Flow",
    "NetworkSpec",
    "Var",
    "Network",
    "build_network",
    "incidence_matrix",
    "capacity_matrix",
    "capacity_vector",
    "link_load",
    "omega_pattern",
    "spec_from_edges",
]

NODE_KINDS = ("source", "forwarding", "destination")


@dataclass(frozen=True)
class Link:
    """A link between two nodes.

    A unidirectional link only carries traffic from ``ends[0]`` to ``ends[1]``.
    """

    id: str
    ends: tuple[str, str]
    capacity: float
    bidirectional: bool = True

    def other(self, node: str) -> str:
        u, v = self.ends
        if node == u:
            return v
        if node == v:
            return u
        raise UnknownLink(f"link {self.id!r} is not incident to node {node!r}")

    def carries(self, tail: str, head: str) -> bool:
        """Whether traffic may travel over this link from ``tail`` to ``head``."""
        if (tail, head) == self.ends:
            return True
        return self.bidirectional and (head, tail) == self.ends


@dataclass(frozen=True)
class Flow:
    id: str
    source: str
    destination: str


@dataclass(frozen=True)
class NetworkSpec:
    """Raw network description.

    Parameters
    ----------
    nodes : mapping
        Node id to kind, one of ``"source"``, ``"forwarding"``, ``"destination"``.
        Insertion order fixes the node order.
    links : sequence of Link
    flows : sequence of Flow
        One flow per source/destination pair.
    routing : mapping
        ``(forwarding node, flow id) -> next-hop node ids``.
    source_links : mapping, optional
        ``source -> first-hop link ids``.  Sources missing from the mapping use
        every incident link that can carry traffic away from them.
    order : int
        Moment order (the even integer ``ell`` of the utilities).
    """

    nodes: Mapping[str, str]
    links: Sequence[Link]
    flows: Sequence[Flow]
    routing: Mapping[tuple[str, str], Sequence[str]] = field(default_factory=dict)
    source_links: Mapping[str, Sequence[str]] = field(default_factory=dict)
    order: int = 6


class Var(NamedTuple):
    """One coordinate of the flattened decision vector.

    ``kind`` is ``"x"`` (a rate sent by ``node`` over ``link`` for ``flow``),
    ``"m"`` (moment ``j`` of source ``node``) or ``"r"`` (aggregate rate).
    """

    kind: str
    node: str
    link: str | None = None
    flow: str | None = None
    j: int | None = None

    def __str__(self) -> str:
        if self.kind == "x":
            return f"x[{self.flow},{self.node},{self.link}]"
        if self.kind == "m":
            return f"m[{self.node},{self.j}]"
        return f"r[{self.node}]"


class Network:
    """Validated network with derived index sets.  Built by :func:`build_network`.

    Attributes
    ----------
    sources, forwarding, destinations : tuple of str
    flows : dict
        Flow id to :class:`Flow`, in declaration order.
    links : dict
        Link id to :class:`Link`, in declaration order.
    flow_of : dict
        Source id to the id of the flow it originates.
    node_links : dict
        ``L_n``: links incident to node ``n``.
    source_links : dict
        ``L_s``: first-hop links of each source.
    flows_at : dict
        ``I_b``: flows visiting forwarding node ``b``.
    out_links, in_links : dict
        ``(b, i) -> L_{b,i}^out`` and ``L_{b,i}^in`` for forwarding ``b``.
    out_flows, in_flows : dict
        ``(n, l) -> I_{n,l}^out`` / ``I_{n,l}^in`` for every node ``n`` and incident ``l``.
    link_flows : dict
        Link id to the flows that traverse it; ``m_l`` is its length.
    variables : tuple of Var
        Flattened decision vector.
    """

    def __init__(self, spec: NetworkSpec, *, kinds, links, flows, flow_of,
                 node_links, source_links, next_hops):
        self.spec = spec
        self.order = int(spec.order)
        self.kinds = dict(kinds)
        self.sources = tuple(n for n, k in kinds.items() if k == "source")
        self.forwarding = tuple(n for n, k in kinds.items() if k == "forwarding")
        self.destinations = tuple(n for n, k in kinds.items() if k == "destination")
        self.links = links
        self.flows = flows
        self.flow_of = flow_of
        self.node_links = node_links
        self.source_links = source_links
        self._next_hops = next_hops

        flow_rank = {f: k for k, f in enumerate(flows)}

        # out_flows[(n, l)]: flows n sends over l
        out_flows: dict[tuple[str, str], list[str]] = {
            (n, l): [] for n in kinds for l in node_links[n]
        }
        for s in self.sources:
            for l in source_links[s]:
                out_flows[(s, l)].append(flow_of[s])
        for (b, i), hops in next_hops.items():
            for h in hops:
                out_flows[(b, self.link_between(b, h))].append(i)
        self.out_flows = {k: tuple(sorted(v, key=flow_rank.__getitem__))
                          for k, v in out_flows.items()}
        self.in_flows = {(n, l): self.out_flows[(links[l].other(n), l)]
                         for (n, l) in self.out_flows}

        self.flows_at = {b: tuple(i for i in flows if (b, i) in next_hops)
                         for b in self.forwarding}
        self.out_links = {}
        self.in_links = {}
        for b in self.forwarding:
            for i in self.flows_at[b]:
                self.out_links[(b, i)] = tuple(
                    l for l in node_links[b] if i in self.out_flows[(b, l)])
                self.in_links[(b, i)] = tuple(
                    l for l in node_links[b] if i in self.in_flows[(b, l)])

        link_flows = {l: set() for l in links}
        for (n, l), fl in self.out_flows.items():
            link_flows[l].update(fl)
        self.link_flows = {l: tuple(sorted(v, key=flow_rank.__getitem__))
                           for l, v in link_flows.items()}

        variables: list[Var] = []
        for s in self.sources:
            i = flow_of[s]
            variables.extend(Var("x", s, l, i) for l in source_links[s])
            variables.extend(Var("m", s, j=j) for j in range(self.order + 1))
            variables.append(Var("r", s))
        for b in self.forwarding:
            for l in node_links[b]:
                variables.extend(Var("x", b, l, i) for i in self.out_flows[(b, l)])
        self.variables = tuple(variables)
        self.index = {v: k for k, v in enumerate(variables)}

        self.neighbors = {n: frozenset(links[l].other(n) for l in node_links[n])
                          for n in kinds}

    # -- lookups ----------------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.variables)

    def routing(self, b: str, i: str) -> tuple[str, ...]:
        return self._next_hops.get((b, i), ())

    def other_end(self, l: str, n: str) -> str:
        """``e_l(n)``: the node joined to ``n`` through link ``l``."""
        try:
            link = self.links[l]
        except KeyError:
            raise UnknownLink(f"unknown link {l!r}") from None
        return link.other(n)

    def link_between(self, u: str, v: str) -> str:
        for l in self.node_links[u]:
            if self.links[l].other(u) == v:
                return l
        raise UnknownLink(f"no link joins {u!r} and {v!r}")

    def is_forwarding(self, n: str) -> bool:
        return self.kinds.get(n) == "forwarding"

    def m_l(self, l: str) -> int:
        """Number of distinct flows using link ``l``."""
        return len(self.link_flows[l])

    def index_of(self, var: Var) -> int:
        return self.index[var]

    def var_at(self, k: int) -> Var:
        return self.variables[k]

    def source_block(self, s: str) -> tuple[np.ndarray, np.ndarray, int]:
        """Indices of ``x_s``, ``m_s`` and ``r_s`` in the flattened vector."""
        i = self.flow_of[s]
        xi = np.array([self.index[Var("x", s, l, i)] for l in self.source_links[s]], dtype=int)
        mi = np.array([self.index[Var("m", s, j=j)] for j in range(self.order + 1)], dtype=int)
        return xi, mi, self.index[Var("r", s)]

    def rate_variables(self) -> list[Var]:
        return [v for v in self.variables if v.kind == "x"]

    @property
    def conservation_rows(self) -> tuple[tuple[str, str], ...]:
        """Row labels ``(b, i)`` of the incidence matrix."""
        return tuple((b, i) for b in self.forwarding for i in self.flows_at[b])

    @property
    def capacity_rows(self) -> tuple[tuple[str, str], ...]:
        """Row labels ``(b, l)`` of the capacity matrix, one per ordered pair."""
        return tuple((b, l) for b in self.forwarding for l in self.node_links[b])

    def __repr__(self) -> str:
        return (f"Network({len(self.sources)} sources, {len(self.forwarding)} forwarding, "
                f"{len(self.links)} links, dim={self.dim})")


# -- construction ---------------------------------------------------------------

def build_network(spec: NetworkSpec) -> Network:
    """Validate ``spec`` and derive every index set.

    Raises
    ------
    NonPositiveCapacity
        A link capacity is not strictly positive.
    FlowBijectionViolation
        Flows do not pair sources with destinations one to one.
    DanglingNextHop
        A routing entry or first hop is not reachable over a usable link.
    RoutingError
        Routing is missing where a flow arrives, present where none arrives,
        loops, or otherwise disagrees with the node kinds.
    NetworkError
        Any other structural problem (unknown kinds, duplicate ids, ...).
    """
    kinds = dict(spec.nodes)
    for n, k in kinds.items():
        if k not in NODE_KINDS:
            raise NetworkError(f"node {n!r} has unknown kind {k!r}")
    if spec.order <= 0 or spec.order % 2:
        raise NetworkError(f"moment order must be a positive even integer, got {spec.order}")

    links: dict[str, Link] = {}
    pairs: dict[frozenset, str] = {}
    for link in spec.links:
        if link.id in links:
            raise NetworkError(f"duplicate link id {link.id!r}")
        u, v = link.ends
        for n in (u, v):
            if n not in kinds:
                raise NetworkError(f"link {link.id!r} references unknown node {n!r}")
        if u == v:
            raise NetworkError(f"link {link.id!r} is a self loop")
        if not link.capacity > 0:
            raise NonPositiveCapacity(f"link {link.id!r} has capacity {link.capacity}")
        key = frozenset((u, v))
        if key in pairs:
            raise NetworkError(f"links {pairs[key]!r} and {link.id!r} join the same pair")
        pairs[key] = link.id
        links[link.id] = link
    node_links = {n: tuple(l for l, link in links.items() if n in link.ends) for n in kinds}

    flows: dict[str, Flow] = {}
    flow_of: dict[str, str] = {}
    sink_of: dict[str, str] = {}
    for f in spec.flows:
        if f.id in flows:
            raise FlowBijectionViolation(f"duplicate flow id {f.id!r}")
        if kinds.get(f.source) != "source":
            raise FlowBijectionViolation(f"flow {f.id!r}: {f.source!r} is not a source node")
        if kinds.get(f.destination) != "destination":
            raise FlowBijectionViolation(f"flow {f.id!r}: {f.destination!r} is not a destination node")
        if f.source in flow_of:
            raise FlowBijectionViolation(f"source {f.source!r} originates two flows")
        if f.destination in sink_of:
            raise FlowBijectionViolation(f"destination {f.destination!r} terminates two flows")
        flows[f.id] = f
        flow_of[f.source] = f.id
        sink_of[f.destination] = f.id
    for n, k in kinds.items():
        if k == "source" and n not in flow_of:
            raise FlowBijectionViolation(f"source {n!r} has no flow")
        if k == "destination" and n not in sink_of:
            raise FlowBijectionViolation(f"destination {n!r} has no flow")

    def admissible_hop(i: str, tail: str, head: str, what: str) -> None:
        kind = kinds.get(head)
        if kind is None:
            raise DanglingNextHop(f"{what}: unknown node {head!r}")
        if not any(links[l].other(tail) == head and links[l].carries(tail, head)
                   for l in node_links[tail]):
            raise DanglingNextHop(f"{what}: {head!r} is not reachable from {tail!r} over a link")
        if kind == "source":
            raise RoutingError(f"{what}: flow routed into source {head!r}")
        if kind == "destination" and head != flows[i].destination:
            raise RoutingError(f"{what}: flow {i!r} routed into foreign destination {head!r}")

    source_links: dict[str, tuple[str, ...]] = {}
    for s in flow_of:
        i = flow_of[s]
        if s in spec.source_links:
            chosen = tuple(spec.source_links[s])
            for l in chosen:
                if l not in links:
                    raise UnknownLink(f"source {s!r}: unknown link {l!r}")
                if s not in links[l].ends:
                    raise DanglingNextHop(f"source {s!r}: link {l!r} is not incident")
        else:
            chosen = tuple(l for l in node_links[s] if links[l].carries(s, links[l].other(s)))
        if not chosen:
            raise RoutingError(f"source {s!r} has no first-hop link")
        if len(set(chosen)) != len(chosen):
            raise RoutingError(f"source {s!r}: repeated first-hop link")
        for l in chosen:
            admissible_hop(i, s, links[l].other(s), f"source {s!r} link {l!r}")
        source_links[s] = tuple(l for l in node_links[s] if l in chosen)
    for s in spec.source_links:
        if s not in flow_of:
            raise NetworkError(f"source_links given for non-source {s!r}")

    next_hops: dict[tuple[str, str], tuple[str, ...]] = {}
    for (b, i), hops in spec.routing.items():
        if kinds.get(b) != "forwarding":
            raise RoutingError(f"routing entry for {b!r}: only forwarding nodes forward traffic")
        if i not in flows:
            raise RoutingError(f"routing entry ({b!r}, {i!r}): unknown flow")
        hops = tuple(hops)
        if not hops:
            continue
        if len(set(hops)) != len(hops):
            raise RoutingError(f"routing entry ({b!r}, {i!r}) repeats a next hop")
        for h in hops:
            admissible_hop(i, b, h, f"routing ({b!r}, {i!r})")
        next_hops[(b, i)] = hops

    # a forwarding node must route flow i exactly when flow i reaches it
    arrives: set[tuple[str, str]] = set()
    for s, ls in source_links.items():
        for l in ls:
            h = links[l].other(s)
            if kinds[h] == "forwarding":
                arrives.add((h, flow_of[s]))
    for (b, i), hops in next_hops.items():
        for h in hops:
            if kinds[h] == "forwarding":
                arrives.add((h, i))
    for key in sorted(arrives - set(next_hops)):
        raise RoutingError(f"flow {key[1]!r} reaches {key[0]!r} but has no next hop there")
    for key in sorted(set(next_hops) - arrives):
        raise RoutingError(f"routing for flow {key[1]!r} at {key[0]!r} but the flow never arrives")

    for i in flows:
        _check_acyclic(i, {b: hops for (b, f), hops in next_hops.items() if f == i})

    return Network(spec, kinds=kinds, links=links, flows=flows, flow_of=flow_of,
                   node_links=node_links, source_links=source_links, next_hops=next_hops)


def _check_acyclic(flow: str, succ: Mapping[str, Sequence[str]]) -> None:
    state: dict[str, int] = {}

    def visit(n: str) -> None:
        state[n] = 1
        for h in succ.get(n, ()):
            if state.get(h) == 1:
                raise RoutingError(f"routing of flow {flow!r} loops through {h!r}")
            if h not in state:
                visit(h)
        state[n] = 2

    for n in succ:
        if n not in state:
            visit(n)


# -- matrices ---------------------------------------------------------------------

def incidence_matrix(net: Network) -> np.ndarray:
    """Edge-node incidence matrix ``B`` (flow conservation, ``B x = 0``).

    One row per ``(b, i)`` with ``b`` forwarding and ``i`` in ``I_b``: ``+1`` on
    the rates of flow ``i`` leaving ``b``, ``-1`` on those arriving at ``b``.
    Moment and aggregate-rate columns are zero.
    """
    rows = net.conservation_rows
    B = np.zeros((len(rows), net.dim))
    for k, (b, i) in enumerate(rows):
        for l in net.out_links[(b, i)]:
            B[k, net.index[Var("x", b, l, i)]] = 1.0
        for l in net.in_links[(b, i)]:
            B[k, net.index[Var("x", net.other_end(l, b), l, i)]] = -1.0
    return B


def capacity_matrix(net: Network) -> np.ndarray:
    """Capacity matrix ``A``; row ``(b, l)`` selects the rates counted against ``c_l``.

    The count is ``1_{b,l} x_{b,l}^out + delta_{b,l} x_{e_l(b),l}^out``: what ``b``
    sends over ``l``, plus what its neighbour sends back when ``l`` is
    bidirectional.
    """
    rows = net.capacity_rows
    A = np.zeros((len(rows), net.dim))
    for k, (b, l) in enumerate(rows):
        for i in net.out_flows[(b, l)]:
            A[k, net.index[Var("x", b, l, i)]] = 1.0
        if net.links[l].bidirectional:
            c = net.other_end(l, b)
            for i in net.in_flows[(b, l)]:
                A[k, net.index[Var("x", c, l, i)]] = 1.0
    return A


def capacity_vector(net: Network) -> np.ndarray:
    return np.array([net.links[l].capacity for _, l in net.capacity_rows])


def link_load(net: Network, x: np.ndarray, b: str, l: str) -> float:
    """Rate counted against link ``l`` at node ``b`` for the flattened vector ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({net.dim},)")
    if l not in net.links:
        raise UnknownLink(f"unknown link {l!r}")
    if l not in net.node_links.get(b, ()):
        raise UnknownLink(f"link {l!r} is not incident to node {b!r}")
    load = sum(x[net.index[Var("x", b, l, i)]] for i in net.out_flows[(b, l)])
    if net.links[l].bidirectional:
        c = net.other_end(l, b)
        load += sum(x[net.index[Var("x", c, l, i)]] for i in net.in_flows[(b, l)])
    return float(load)


def omega_pattern(net: Network) -> np.ndarray:
    """Predicted diagonal of ``B^T B``, one entry per flattened variable.

    A rate column meets the conservation row of its sender (when the sender
    forwards) and of its receiver (when the receiver forwards), so the entry is
    2 between two forwarding nodes, 1 when exactly one end forwards (a source
    sending in, or a node handing over to the destination), and 0 otherwise.
    Moment and aggregate-rate columns are 0.
    """
    w = np.zeros(net.dim)
    for k, v in enumerate(net.variables):
        if v.kind != "x":
            continue
        w[k] = int(net.is_forwarding(v.node)) + int(net.is_forwarding(net.other_end(v.link, v.node)))
    return w


def spec_from_edges(
    sources: Iterable[str],
    forwarding: Iterable[str],
    destinations: Iterable[str],
    links: Iterable[tuple],
    flows: Iterable[tuple[str, str, str]],
    routing: Mapping[tuple[str, str], Sequence[str]],
    source_links: Mapping[str, Sequence[str]] | None = None,
    order: int = 6,
) -> NetworkSpec:
    """Convenience constructor from plain tuples.

    ``links`` items are ``(id, u, v, capacity[, bidirectional])``.
    """
    nodes = {}
    for kind, names in (("source", sources), ("forwarding", forwarding),
                        ("destination", destinations)):
        for n in names:
            nodes[n] = kind
    lk = []
    for item in links:
        lid, u, v, cap, *rest = item
        lk.append(Link(lid, (u, v), float(cap), bool(rest[0]) if rest else True))
    return NetworkSpec(
        nodes=nodes,
        links=tuple(lk),
        flows=tuple(Flow(*f) for f in flows),
        routing={k: tuple(v) for k, v in routing.items()},
        source_links={k: tuple(v) for k, v in (source_links or {}).items()},
        order=order,
    )
