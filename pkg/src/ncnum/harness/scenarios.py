"""Built-in scenarios and a random desk-scale instance generator."""

from __future__ import annotations

import numpy as np

from ncnum.harness.config import ExperimentConfig, StepSizeConfig
from ncnum.moments import UtilitySpec
from ncnum.network import NetworkSpec, spec_from_edges

__all__ = [
    "FIG2_ROUTING",
    "fig2_network_spec",
    "builtin_fig2_scenario",
    "toy_network_spec",
    "toy_scenario",
    "single_link_spec",
    "random_network_spec",
    "SCENARIOS",
]

# next hops of each source's flow at b1..b8; None where the flow never passes
FIG2_ROUTING = {
    "s1": (("b2", "b7"), ("b7", "b8"), ("b4",), ("d1",), None, None, ("b8",), ("b3", "b4")),
    "s2": (("b2", "b7"), ("b7", "b8"), None, None, ("d2",), None, ("b5",), ("b5", "b7")),
    "s3": (("b2", "b7"), ("b7", "b8"), ("b4",), ("d3",), None, None, ("b8",), ("b3", "b4")),
    "s4": (("b2", "b7"), ("b7", "b8"), None, None, ("d4",), None, ("b5",), ("b5", "b7")),
    "s5": (("b7",), ("b1", "b7", "b8"), ("b4", "b8"), ("b8",), ("b7",), ("d5",), ("b6",), ("b5", "b7")),
    "s6": (("b7",), ("b1", "b7", "b8"), ("b4", "b8"), ("b8",), ("b7",), ("d6",), ("b6",), ("b5", "b7")),
    "s7": (("b2", "b7"), ("d7",), None, None, None, None, ("b2", "b8"), ("b2",)),
    "s8": (("b2", "b7"), ("b7", "b8"), ("b4",), ("d8",), None, None, ("b8",), ("b3", "b4")),
}

# Reconstructed topology: first hops are the forwarding nodes that handle a
# flow without any other node sending it there; link directions follow the
# hops used; every capacity below is an assumption.
_FIG2_ENTRY = {"s1": ("b1",), "s2": ("b1",), "s3": ("b1",), "s4": ("b1",),
               "s5": ("b2", "b3"), "s6": ("b2", "b3"), "s7": ("b1",), "s8": ("b1",)}
_FIG2_CORE = (
    ("b1", "b2", 12.0), ("b1", "b7", 12.0), ("b2", "b7", 10.0), ("b2", "b8", 10.0),
    ("b7", "b8", 10.0), ("b7", "b5", 8.0), ("b7", "b6", 8.0), ("b8", "b3", 8.0),
    ("b8", "b4", 8.0), ("b8", "b5", 8.0), ("b3", "b4", 8.0),
)
_FIG2_SOURCE_CAP = 10.0
_FIG2_DEST_CAP = 10.0


def fig2_network_spec() -> NetworkSpec:
    """Eight sources and forwarding nodes routed as in the reference routing table.

    Link capacities and directions are reconstructed, not measured; the
    scenario metadata says so.
    """
    fwd = [f"b{k}" for k in range(1, 9)]
    sources = list(FIG2_ROUTING)
    dests = [f"d{k}" for k in range(1, 9)]
    used = set()
    for s, row in FIG2_ROUTING.items():
        for b, hops in zip(fwd, row):
            for h in hops or ():
                used.add((b, h))
    links = []
    for s in sources:
        for k, b in enumerate(_FIG2_ENTRY[s]):
            links.append((f"l_{s}_{b}", s, b, _FIG2_SOURCE_CAP, False))
    for u, v, cap in _FIG2_CORE:
        if (u, v) not in used and (v, u) not in used:
            raise AssertionError(f"core link {u}-{v} is never used")
        if (u, v) in used:
            links.append((f"l_{u}_{v}", u, v, cap, (v, u) in used))
        else:
            links.append((f"l_{v}_{u}", v, u, cap, False))
    dest_links = sorted({(b, h) for b, h in used if h.startswith("d")})
    for b, d in dest_links:
        links.append((f"l_{b}_{d}", b, d, _FIG2_DEST_CAP, False))
    flows = [(f"f{k}", s, f"d{k}") for k, s in enumerate(sources, start=1)]
    routing = {}
    for k, (s, row) in enumerate(FIG2_ROUTING.items(), start=1):
        for b, hops in zip(fwd, row):
            if hops:
                routing[(b, f"f{k}")] = list(hops)
    source_links = {s: [f"l_{s}_{b}" for b in _FIG2_ENTRY[s]] for s in sources}
    return spec_from_edges(sources, fwd, dests, links, flows, routing, source_links, order=6)


def builtin_fig2_scenario(iterations: int = 2000) -> ExperimentConfig:
    """The eight-source scenario with the step-like utility, ``xi = 0`` and ``zeta = 10``."""
    spec = fig2_network_spec()
    u = UtilitySpec.step_like(0.0, 10.0)
    return ExperimentConfig(
        network=spec,
        utilities={s: u for s in FIG2_ROUTING},
        step_sizes=StepSizeConfig(),
        iterations=iterations,
        output="out/fig2",
        metadata={"scenario": "fig2", "reconstructed": True,
                  "note": "link capacities and directions are reconstructed assumptions"},
    )


def toy_network_spec() -> NetworkSpec:
    """Three sources, three forwarding nodes, multipath routing and known capacities."""
    return spec_from_edges(
        ["s1", "s2", "s3"], ["b1", "b2", "b3"], ["d1", "d2", "d3"],
        [("l1", "s1", "b1", 6, False), ("l2", "s2", "b1", 6, False), ("l3", "s3", "b2", 6, False),
         ("l4", "b1", "b2", 5), ("l5", "b1", "b3", 4), ("l6", "b2", "b3", 3),
         ("l7", "b3", "d1", 8, False), ("l8", "b3", "d2", 8, False), ("l9", "b2", "d3", 5, False),
         ("l10", "b3", "d3", 4, False)],
        [("f1", "s1", "d1"), ("f2", "s2", "d2"), ("f3", "s3", "d3")],
        {("b1", "f1"): ["b3", "b2"], ("b2", "f1"): ["b3"], ("b3", "f1"): ["d1"],
         ("b1", "f2"): ["b3"], ("b3", "f2"): ["d2"],
         ("b2", "f3"): ["d3", "b3"], ("b3", "f3"): ["d3"]},
        order=6,
    )


def toy_scenario(iterations: int = 3000) -> ExperimentConfig:
    spec = toy_network_spec()
    u = UtilitySpec.step_like(0.0, 10.0)
    return ExperimentConfig(network=spec, utilities={s: u for s in ("s1", "s2", "s3")},
                            iterations=iterations, output="out/toy",
                            metadata={"scenario": "toy", "reconstructed": False})


def single_link_spec(capacity: float = 10.0, order: int = 6, with_forwarder: bool = False) -> NetworkSpec:
    """One source and one destination joined by a link, optionally through one forwarding node."""
    if with_forwarder:
        return spec_from_edges(["s1"], ["b1"], ["d1"],
                               [("l1", "s1", "b1", capacity, False), ("l2", "b1", "d1", capacity, False)],
                               [("f1", "s1", "d1")], {("b1", "f1"): ["d1"]}, order=order)
    return spec_from_edges(["s1"], [], ["d1"], [("l1", "s1", "d1", capacity, False)],
                           [("f1", "s1", "d1")], {}, order=order)


def random_network_spec(seed: int = 0, n_sources: int = 2, n_forwarding: int = 3, *,
                        order: int = 6, extra_links: float = 0.5, bidir_prob: float = 0.7,
                        max_splits: int | None = None, cap_range=(2.0, 8.0)) -> NetworkSpec:
    """Random connected instance whose routes always make progress towards the destination.

    Forwarding nodes sit on a bidirectional chain with random extra links.
    Each flow only moves to nodes strictly closer (in hops) to its
    destination, so routes are acyclic.  ``max_splits`` caps the number of
    places where a flow divides (two first-hop links or two next hops); with
    ``max_splits=1`` every flow has at most two routes.
    """
    if n_sources < 1 or n_forwarding < 1:
        raise ValueError("need at least one source and one forwarding node")
    rng = np.random.default_rng(seed)
    fwd = [f"b{k}" for k in range(1, n_forwarding + 1)]
    src = [f"s{k}" for k in range(1, n_sources + 1)]
    dst = [f"d{k}" for k in range(1, n_sources + 1)]

    def cap():
        return float(np.round(rng.uniform(*cap_range) * 2) / 2)

    links = []
    carries: dict[str, set[str]] = {n: set() for n in fwd + dst}
    chain = list(rng.permutation(fwd))
    pairs = set()
    for u, v in zip(chain, chain[1:]):
        pairs.add(frozenset((u, v)))
        links.append((u, v, cap(), True))
    for a in range(n_forwarding):
        for b in range(a + 1, n_forwarding):
            key = frozenset((fwd[a], fwd[b]))
            if key in pairs or rng.random() >= extra_links / max(1, n_forwarding - 1):
                continue
            pairs.add(key)
            bidir = bool(rng.random() < bidir_prob)
            u, v = (fwd[a], fwd[b]) if rng.random() < 0.5 else (fwd[b], fwd[a])
            links.append((u, v, cap(), bidir))
    for d in dst:
        for b in rng.choice(fwd, size=min(n_forwarding, int(rng.integers(1, 3))), replace=False):
            links.append((str(b), d, cap(), False))
    for u, v, _, bidir in links:
        carries[u].add(v)
        if bidir:
            carries[v].add(u)

    source_links = {}
    entries = {}
    for s in src:
        k = min(n_forwarding, int(rng.integers(1, 3)))
        entries[s] = [str(b) for b in rng.choice(fwd, size=k, replace=False)]
    edge_list = []
    for k, (u, v, c, bidir) in enumerate(links):
        edge_list.append((f"l{k + 1}", u, v, c, bidir))
    for s in src:
        ids = []
        for b in entries[s]:
            lid = f"l{len(edge_list) + 1}"
            edge_list.append((lid, s, b, cap() + 2.0, False))
            ids.append(lid)
        source_links[s] = ids

    routing = {}
    flows = []
    for i, (s, d) in enumerate(zip(src, dst), start=1):
        fid = f"f{i}"
        flows.append((fid, s, d))
        dist = {d: 0}
        frontier = [d]
        while frontier:
            nxt = []
            for v in frontier:
                for u in fwd:
                    if u not in dist and v in carries[u]:
                        dist[u] = dist[v] + 1
                        nxt.append(u)
            frontier = nxt
        splits = 0
        firsts = [b for b in entries[s] if b in dist]
        if not firsts:
            raise ValueError(f"seed {seed}: no route for {fid}")
        if max_splits is not None and len(firsts) > 1:
            if splits >= max_splits:
                firsts = firsts[:1]
            else:
                splits += 1
        source_links[s] = [lid for lid, b in zip(source_links[s], entries[s]) if b in firsts]
        todo = list(dict.fromkeys(firsts))
        seen = set(todo)
        while todo:
            b = todo.pop(0)
            cands = sorted((c for c in carries[b] if c in dist and dist[c] < dist[b]
                            and (c in fwd or c == d)), key=lambda c: (dist[c], c))
            take = 1
            if len(cands) > 1 and rng.random() < 0.6 and (max_splits is None or splits < max_splits):
                take = 2
                splits += 1
            hops = [str(c) for c in (cands[:1] + list(rng.permutation(cands[1:]))[: take - 1])]
            routing[(b, fid)] = hops
            for c in hops:
                if c != d and c not in seen:
                    seen.add(c)
                    todo.append(c)
    # drop source links that lost their flow, then unused destinations' links stay (harmless)
    used_src = {lid for ls in source_links.values() for lid in ls}
    edge_list = [e for e in edge_list if not (e[1] in src and e[0] not in used_src)]
    return spec_from_edges(src, fwd, dst, edge_list, flows, routing, source_links, order=order)


SCENARIOS = {"fig2": builtin_fig2_scenario, "toy": toy_scenario}
