import numpy as np
import pytest

from ncnum.baselines import (
    SolverConfig,
    brute_force_nonconvex,
    centralized_solve,
    flow_paths,
    relaxation_gap,
    relaxation_value,
)
from ncnum.errors import TooLarge
from ncnum.harness.scenarios import single_link_spec, toy_network_spec
from ncnum.moments import UtilitySpec, eval_utility
from ncnum.network import build_network, spec_from_edges

from oracles import random_feasible_point

SQRT2 = UtilitySpec((0.0, 1.0, 0.0), 2, xi=0.0, zeta=10.0)


def shared_unit_link(order=2):
    """Two sources whose flows share the unit-capacity link l3."""
    return build_network(spec_from_edges(
        ["s1", "s2"], ["b1", "b2"], ["d1", "d2"],
        [("l1", "s1", "b1", 5, False), ("l2", "s2", "b1", 5, False), ("l3", "b1", "b2", 1, False),
         ("l4", "b2", "d1", 5, False), ("l5", "b2", "d2", 5, False)],
        [("f1", "s1", "d1"), ("f2", "s2", "d2")],
        {("b1", "f1"): ["b2"], ("b1", "f2"): ["b2"], ("b2", "f1"): ["d1"], ("b2", "f2"): ["d2"]},
        order=order,
    ))


@pytest.fixture(scope="module")
def toy_ref():
    net = build_network(toy_network_spec())
    return net, centralized_solve(net, UtilitySpec.step_like())


def test_concave_single_link_saturates():
    net = build_network(single_link_spec(10.0, order=2))
    ref = centralized_solve(net, SQRT2)
    assert ref.r["s1"] == pytest.approx(10.0, abs=1e-5)
    assert ref.objective == pytest.approx(np.sqrt(10.0), abs=1e-6)
    oracle = brute_force_nonconvex(net, SQRT2, 0.5)
    assert oracle.r["s1"] == pytest.approx(10.0)
    gap = relaxation_gap(ref, oracle)
    assert gap.upper_bound_holds and abs(gap.relative_gap) < 1e-6


def test_zero_utility():
    net = build_network(single_link_spec(10.0))
    u = UtilitySpec((0,) * 7, 6, xi=0.0, zeta=10.0)
    ref = centralized_solve(net, u)
    assert ref.objective == pytest.approx(0.0, abs=1e-9)
    assert brute_force_nonconvex(net, u, 1.0).objective == 0.0


def test_step_like_oracle_is_grid_argmax():
    net = build_network(single_link_spec(10.0))
    u = UtilitySpec.step_like()
    h = 0.0625
    oracle = brute_force_nonconvex(net, u, h)
    grid = np.arange(0, 10 + h / 2, h)
    vals = eval_utility(u, grid)
    assert oracle.objective == pytest.approx(vals.max(), abs=1e-12)
    assert oracle.r["s1"] == pytest.approx(grid[np.argmax(vals)])


def test_pinned_rate():
    net = build_network(single_link_spec(10.0))
    u = UtilitySpec.step_like(4.0, 4.0)
    oracle = brute_force_nonconvex(net, u, 0.3)
    assert oracle.r["s1"] == 4.0
    assert oracle.evaluated == 1
    ref = centralized_solve(net, u)
    assert ref.r["s1"] == pytest.approx(4.0, abs=1e-6)


def test_symmetric_split_among_maximizers():
    net = shared_unit_link()
    lin = UtilitySpec.linear(2, 0.0, 5.0)
    oracle = brute_force_nonconvex(net, lin, 0.25)
    assert oracle.objective == pytest.approx(2 * eval_utility(lin, 0.5))
    oracle = brute_force_nonconvex(net, SQRT2, 0.05)
    assert oracle.r["s1"] == pytest.approx(0.5) and oracle.r["s2"] == pytest.approx(0.5)


def test_oracle_guards():
    from ncnum.harness.scenarios import fig2_network_spec

    with pytest.raises(TooLarge):
        brute_force_nonconvex(build_network(fig2_network_spec()), UtilitySpec.step_like(), 1.0)
    with pytest.raises(TooLarge):
        brute_force_nonconvex(build_network(toy_network_spec()), UtilitySpec.step_like(), 0.01,
                              max_combinations=1000)
    with pytest.raises(ValueError):
        brute_force_nonconvex(build_network(toy_network_spec()), UtilitySpec.step_like(), 0.0)


def test_flow_paths_toy(toy_net):
    for s in toy_net.sources:
        paths = flow_paths(toy_net, s)
        assert 1 <= len(paths) <= 2
        assert len(set(paths)) == len(paths)


def test_oracle_monotone_under_halving(toy_net):
    u = UtilitySpec.step_like()
    coarse = brute_force_nonconvex(toy_net, u, 1.0)
    fine = brute_force_nonconvex(toy_net, u, 0.5)
    finer = brute_force_nonconvex(toy_net, u, 0.25)
    assert coarse.objective <= fine.objective <= finer.objective


def test_upper_bound_on_toy(toy_ref):
    net, ref = toy_ref
    oracle = brute_force_nonconvex(net, UtilitySpec.step_like(), 0.25)
    rep = relaxation_gap(ref, oracle)
    assert rep.upper_bound_holds and rep.gap >= -1e-6
    # the oracle's point, lifted to Dirac moments, is relaxation-feasible
    assert relaxation_value(net, UtilitySpec.step_like(), oracle.x) == pytest.approx(oracle.objective)


def test_reference_residuals(toy_ref):
    _, ref = toy_ref
    assert ref.residuals["conservation"] <= 1e-6
    assert ref.residuals["capacity"] <= 1e-6
    assert ref.residuals["complementary_slackness"] <= 1e-5
    assert np.all(ref.lam >= 0)


def test_reference_stationarity(toy_ref, rng):
    net, ref = toy_ref
    u = UtilitySpec.step_like()
    worst = -np.inf
    found = 0
    while found < 300:
        y = random_feasible_point(net, u, rng)
        if y is None:
            continue
        found += 1
        d = y - ref.x
        step = 1e-3 * d / np.linalg.norm(d)
        worst = max(worst, relaxation_value(net, u, ref.x + step) - ref.objective)
    assert worst <= 1e-5


def test_pdhg_method_agrees_with_conic():
    net = shared_unit_link()
    conic = centralized_solve(net, SQRT2)
    pdhg = centralized_solve(net, SQRT2, SolverConfig(method="pdhg", iterations=20000, feas_tol=1e-3))
    assert pdhg.objective == pytest.approx(conic.objective, rel=1e-2)
    assert conic.objective == pytest.approx(2 * np.sqrt(0.5), abs=1e-6)


def test_unknown_method():
    with pytest.raises(ValueError):
        centralized_solve(shared_unit_link(), SQRT2, SolverConfig(method="ga"))
