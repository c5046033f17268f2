import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncnum.errors import DanglingNextHop, FlowBijectionViolation, NonPositiveCapacity, RoutingError, UnknownLink
from ncnum.harness.scenarios import fig2_network_spec, random_network_spec, single_link_spec
from ncnum.network import (
    Var,
    build_network,
    capacity_matrix,
    incidence_matrix,
    link_load,
    omega_pattern,
    spec_from_edges,
)


def test_micro_index_sets(micro_net):
    net = micro_net
    assert net.in_flows[("b3", "l3")] == ("f1",)
    assert net.out_flows[("b3", "l3")] == ("f2",)
    assert net.out_links[("b3", "f1")] == ("l4", "l7")
    assert net.in_links[("b3", "f1")] == ("l3",)
    assert net.other_end("l3", "b3") == "b2"
    assert net.other_end("l3", net.other_end("l3", "b3")) == "b3"
    assert net.m_l("l3") == 2
    assert net.neighbors["b3"] == frozenset({"b2", "d1", "s2", "b1"})


def test_micro_dimension(micro_net):
    net = micro_net
    ell = net.order
    expected = sum(len(net.source_links[s]) + ell + 2 for s in net.sources)
    expected += sum(len(net.out_links[(b, i)]) for b in net.forwarding for i in net.flows_at[b])
    assert net.dim == expected


def test_incidence_row_matches_conservation_stencil(micro_net):
    net = micro_net
    B = incidence_matrix(net)
    row = B[net.conservation_rows.index(("b3", "f1"))]
    plus = {net.variables[k] for k in np.flatnonzero(row > 0)}
    minus = {net.variables[k] for k in np.flatnonzero(row < 0)}
    assert plus == {Var("x", "b3", "l4", "f1"), Var("x", "b3", "l7", "f1")}
    assert minus == {Var("x", "b2", "l3", "f1")}


def test_capacity_row_bidirectional(micro_net):
    net = micro_net
    A = capacity_matrix(net)
    row = A[net.capacity_rows.index(("b2", "l3"))]
    ones = {net.variables[k] for k in np.flatnonzero(row)}
    assert ones == {Var("x", "b2", "l3", "f1"), Var("x", "b3", "l3", "f2")}


def test_capacity_row_unidirectional(micro_net):
    net = micro_net
    A = capacity_matrix(net)
    row = A[net.capacity_rows.index(("b2", "l2"))]
    assert {net.variables[k] for k in np.flatnonzero(row)} == {Var("x", "b2", "l2", "f2")}


def test_link_load_examples(micro_net):
    net = micro_net
    x = np.zeros(net.dim)
    assert link_load(net, x, "b2", "l3") == 0.0
    x[net.index[Var("x", "b2", "l3", "f1")]] = 2.0
    x[net.index[Var("x", "b3", "l3", "f2")]] = 3.0
    assert link_load(net, x, "b2", "l3") == 5.0
    y = np.zeros(net.dim)
    y[net.index[Var("x", "b2", "l2", "f2")]] = 4.0
    assert link_load(net, y, "b2", "l2") == 4.0
    with pytest.raises(UnknownLink):
        link_load(net, x, "b2", "nope")


def test_single_link_no_forwarding():
    net = build_network(single_link_spec(10.0))
    assert net.source_links["s1"] == ("l1",)
    assert net.forwarding == ()
    assert capacity_matrix(net).shape == (0, net.dim)


def test_balanced_flow_has_zero_conservation(toy_net):
    net = toy_net
    x = np.zeros(net.dim)

    def put(node, link, flow, v):
        x[net.index[Var("x", node, link, flow)]] += v

    # f1: s1 -> b1 splits 2 to b3 and 1 to b2, b2 -> b3, b3 -> d1
    put("s1", "l1", "f1", 3)
    put("b1", "l5", "f1", 2)
    put("b1", "l4", "f1", 1)
    put("b2", "l6", "f1", 1)
    put("b3", "l7", "f1", 3)
    assert np.allclose(incidence_matrix(net) @ x, 0)


def test_dangling_next_hop():
    spec = spec_from_edges(["s1"], ["b1"], ["d1"], [("l1", "s1", "b1", 1, False), ("l2", "b1", "d1", 1, False)],
                           [("f1", "s1", "d1")], {("b1", "f1"): ["d9"]})
    with pytest.raises(DanglingNextHop):
        build_network(spec)


def test_route_back_to_source_rejected():
    spec = spec_from_edges(["s1"], ["b1"], ["d1"], [("l1", "s1", "b1", 1), ("l2", "b1", "d1", 1, False)],
                           [("f1", "s1", "d1")], {("b1", "f1"): ["s1"]})
    with pytest.raises(RoutingError):
        build_network(spec)


def test_nonpositive_capacity():
    spec = single_link_spec(0.0)
    with pytest.raises(NonPositiveCapacity):
        build_network(spec)


def test_flow_bijection():
    spec = spec_from_edges(["s1", "s2"], [], ["d1"], [("l1", "s1", "d1", 1, False), ("l2", "s2", "d1", 1, False)],
                           [("f1", "s1", "d1"), ("f2", "s2", "d1")], {})
    with pytest.raises(FlowBijectionViolation):
        build_network(spec)


def test_omega_matches_gram_diagonal_fig2():
    net = build_network(fig2_network_spec())
    B = incidence_matrix(net)
    assert np.array_equal(np.diag(B.T @ B), omega_pattern(net))


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 5))
def test_random_network_invariants(seed, ns, nf):
    net = build_network(random_network_spec(seed, ns, nf))
    B = incidence_matrix(net)
    assert np.array_equal(np.diag(B.T @ B), omega_pattern(net))
    for k, v in enumerate(net.variables):
        assert net.index_of(net.var_at(k)) == k
    for b in net.forwarding:
        for l in net.node_links[b]:
            for i in net.out_flows[(b, l)]:
                assert i in net.flows_at[b]
                assert l in net.out_links[(b, i)]
        for i in net.flows_at[b]:
            row = B[net.conservation_rows.index((b, i))]
            assert np.count_nonzero(row) >= 2
    for l, link in net.links.items():
        u, v = link.ends
        assert net.other_end(l, net.other_end(l, u)) == u
        assert net.m_l(l) == len(net.link_flows[l])
