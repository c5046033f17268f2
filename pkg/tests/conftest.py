import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncnum.harness.scenarios import single_link_spec, toy_network_spec
from ncnum.moments import UtilitySpec
from ncnum.network import build_network, spec_from_edges

settings.register_profile("ncnum", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ncnum")

ACCEPTANCE_LINES: dict[int, str] = {}


def micro_spec():
    """Two flows; l3 is bidirectional and carries flow f1 b2->b3 and f2 b3->b2."""
    return spec_from_edges(
        ["s1", "s2"], ["b1", "b2", "b3"], ["d1", "d2"],
        [("l1", "s1", "b2", 6, False), ("l2", "b2", "d2", 5, False), ("l3", "b2", "b3", 4),
         ("l4", "b3", "d1", 3, False), ("l5", "s2", "b3", 6, False), ("l6", "b1", "d1", 5, False),
         ("l7", "b3", "b1", 4, False)],
        [("f1", "s1", "d1"), ("f2", "s2", "d2")],
        {("b2", "f1"): ["b3"], ("b3", "f1"): ["d1", "b1"], ("b1", "f1"): ["d1"],
         ("b3", "f2"): ["b2"], ("b2", "f2"): ["d2"]},
    )


@pytest.fixture
def micro_net():
    return build_network(micro_spec())


@pytest.fixture
def toy_net():
    return build_network(toy_network_spec())


@pytest.fixture
def single_net():
    return build_network(single_link_spec(10.0))


@pytest.fixture
def step_utility():
    return UtilitySpec.step_like()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
