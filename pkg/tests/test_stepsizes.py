import numpy as np
import pytest

from ncnum.dpda import StepSizes, auto_step_sizes, q_certificate, validate_step_sizes
from ncnum.dpda.certificate import q_matrix, schur_matrix
from ncnum.errors import TooLarge
from ncnum.harness.scenarios import random_network_spec, single_link_spec
from ncnum.network import Var, build_network, spec_from_edges


def shared_link_net():
    """Three flows leave b1 over the single link l4, so m_l = 3 there."""
    return build_network(spec_from_edges(
        ["s1", "s2", "s3"], ["b1", "b2"], ["d1", "d2", "d3"],
        [("l1", "s1", "b1", 5, False), ("l2", "s2", "b1", 5, False), ("l3", "s3", "b1", 5, False),
         ("l4", "b1", "b2", 9, False), ("l5", "b2", "d1", 5, False), ("l6", "b2", "d2", 5, False),
         ("l7", "b2", "d3", 5, False)],
        [("f1", "s1", "d1"), ("f2", "s2", "d2"), ("f3", "s3", "d3")],
        {("b1", "f1"): ["b2"], ("b1", "f2"): ["b2"], ("b1", "f3"): ["b2"],
         ("b2", "f1"): ["d1"], ("b2", "f2"): ["d2"], ("b2", "f3"): ["d3"]},
    ))


def test_source_condition_equality():
    net = build_network(single_link_spec(10.0))
    ss = StepSizes(0.1, tau_s={"s1": 1.25}, d_s={"s1": 4.0})
    assert validate_step_sizes(net, ss).ok


def test_source_condition_violation():
    net = build_network(single_link_spec(10.0))
    check = validate_step_sizes(net, StepSizes(0.1, tau_s={"s1": 10.0}, d_s={"s1": 4.0}))
    assert not check.ok
    (v,) = [v for v in check.violations if v.condition == "literal-source"]
    assert v.lhs == pytest.approx(0.1) and v.rhs == pytest.approx(0.8)


def test_rate_condition_boundary():
    net = shared_link_net()
    assert net.m_l("l4") == 3
    ss = auto_step_sizes(net, 0.1, strict=False)
    for i in ("f1", "f2", "f3"):
        v = Var("x", "b1", "l4", i)
        ss.tau[v], ss.d[v] = 1 / 4.8, 4.0
    check = validate_step_sizes(net, ss, strict=False)
    assert check.ok, check.violations
    ss.tau[Var("x", "b1", "l4", "f1")] = 1 / 4.7
    bad = validate_step_sizes(net, ss, strict=False)
    assert [v.condition for v in bad.violations] == ["literal-rate"]


def test_domain_violations_are_reported_not_raised():
    net = build_network(single_link_spec(10.0))
    check = validate_step_sizes(net, StepSizes(-1.0, tau_s={"s1": 0.0}, d_s={}))
    assert not check.ok
    assert {v.condition for v in check.violations} == {"domain"}


def test_auto_margin_one_is_boundary():
    net = build_network(single_link_spec(10.0))
    ss = auto_step_sizes(net, 0.1, margin=1.0)
    assert ss.tau_s["s1"] == pytest.approx(1.25)
    assert ss.d_s["s1"] == 4.0


def test_auto_margin_half_halves(toy_net):
    a = auto_step_sizes(toy_net, 0.1, 1.0)
    b = auto_step_sizes(toy_net, 0.1, 0.5)
    for k in a.tau:
        assert b.tau[k] == pytest.approx(a.tau[k] / 2)
    for k in a.tau_s:
        assert b.tau_s[k] == pytest.approx(a.tau_s[k] / 2)
    assert validate_step_sizes(toy_net, a).ok and validate_step_sizes(toy_net, b).ok


def test_auto_rejects_bad_arguments(toy_net):
    with pytest.raises(ValueError):
        auto_step_sizes(toy_net, 0.0)
    with pytest.raises(ValueError):
        auto_step_sizes(toy_net, 0.1, margin=1.5)


@pytest.mark.parametrize("seed", range(10))
def test_auto_valid_and_certified(seed):
    net = build_network(random_network_spec(seed, 2, 3, order=2))
    ss = auto_step_sizes(net, 0.1, 0.9)
    assert validate_step_sizes(net, ss).ok
    cert = q_certificate(net, ss)
    assert cert.psd and cert.min_eigenvalue >= -1e-8
    assert cert.consistent


def test_inflated_tau_indefinite_with_witness(toy_net):
    ss = auto_step_sizes(toy_net, 0.1, 0.9).scaled(100.0)
    assert not validate_step_sizes(toy_net, ss).ok
    cert = q_certificate(toy_net, ss)
    assert not cert.psd and not cert.schur_psd
    w = cert.witness
    Q = q_matrix(toy_net, ss)
    assert np.linalg.norm(w) == pytest.approx(1.0)
    assert w @ Q @ w == pytest.approx(cert.min_eigenvalue, rel=1e-8)
    assert w @ Q @ w < 0


def test_schur_agrees_with_direct_on_one_link():
    net = build_network(single_link_spec(10.0, with_forwarder=True))
    base = auto_step_sizes(net, 0.1, 1.0)
    for factor in (0.5, 1.0, 2.0, 10.0, 100.0):
        ss = base.scaled(factor)
        Q = q_matrix(net, ss)
        direct = np.linalg.eigvalsh(Q).min() >= -1e-10
        schur = np.linalg.eigvalsh(schur_matrix(net, ss)).min() >= -1e-10
        assert direct == schur
        assert q_certificate(net, ss).consistent


def test_certificate_too_large(toy_net):
    ss = auto_step_sizes(toy_net, 0.1)
    with pytest.raises(TooLarge):
        q_certificate(toy_net, ss, max_dim=5)
