import json
import subprocess
import sys

import numpy as np
import pytest

from ncnum.dpda import validate_step_sizes
from ncnum.errors import InsufficientData, NonPositiveResiduals, ParseError, ValidationError
from ncnum.harness import (
    builtin_fig2_scenario,
    fit_rate,
    load_config,
    loads_config,
    read_trace,
    replay_residuals,
    run_experiment,
    toy_scenario,
    write_config,
)
from ncnum.harness.experiment import resolve_step_sizes
from ncnum.harness.fitting import fit_rate_arrays
from ncnum.moments import STEP_COEFFICIENTS
from ncnum.network import build_network

MINIMAL = """\
network:
  sources: [s1]
  forwarding: [b1]
  destinations: [d1]
  links:
    - {id: l1, ends: [s1, b1], capacity: 10, bidirectional: false}
    - {id: l2, ends: [b1, d1], capacity: 10, bidirectional: false}
  flows:
    - {id: f1, source: s1, destination: d1}
  routing:
    b1: {f1: [d1]}
"""


# -- configuration ------------------------------------------------------------------

def test_minimal_config_defaults():
    cfg = loads_config(MINIMAL)
    assert cfg.step_sizes.mode == "auto"
    assert cfg.step_sizes.margin == 0.9 and cfg.step_sizes.gamma == 0.1
    assert cfg.iterations >= 1
    assert cfg.projection_tol > 0 and cfg.feasibility_tol > 0
    u = cfg.utilities["s1"]
    assert u.coefficients == tuple(STEP_COEFFICIENTS)


def test_round_trip(tmp_path):
    for cfg in (toy_scenario(), builtin_fig2_scenario(), loads_config(MINIMAL)):
        path = write_config(cfg, tmp_path / "c.yaml")
        assert load_config(path) == cfg


def test_missing_capacity_names_link():
    text = MINIMAL.replace("{id: l2, ends: [b1, d1], capacity: 10, bidirectional: false}",
                           "{id: l2, ends: [b1, d1], bidirectional: false}")
    with pytest.raises(ValidationError) as exc:
        loads_config(text)
    assert any("l2" in f and "capacity" in f for f in exc.value.failures)


def test_all_failures_collected_with_lines():
    text = MINIMAL.replace("capacity: 10, bidirectional: false}\n    - {id: l2",
                           "capacity: -1, bidirectional: false}\n    - {id: l2")
    text += "iterations: 0\nbogus: 1\n"
    with pytest.raises(ValidationError) as exc:
        loads_config(text)
    msgs = exc.value.failures
    assert len(msgs) >= 3
    assert any("iterations" in m for m in msgs)
    assert any("bogus" in m for m in msgs)
    assert all("line" in m for m in msgs)


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as exc:
        loads_config("network:\n  sources: [s1\n  forwarding: []\n")
    assert exc.value.line is not None and exc.value.line >= 2


def test_auto_step_sizes_validate():
    cfg = loads_config(MINIMAL + "step_sizes: {mode: auto, gamma: 0.1}\n")
    net = build_network(cfg.network)
    assert validate_step_sizes(net, resolve_step_sizes(net, cfg)).ok


def test_network_file_reference(tmp_path):
    import yaml

    net_doc = yaml.safe_load(MINIMAL)["network"]
    (tmp_path / "net.yaml").write_text(yaml.safe_dump(net_doc))
    (tmp_path / "exp.yaml").write_text("network: net.yaml\niterations: 5\n")
    cfg = load_config(tmp_path / "exp.yaml")
    assert cfg.network == loads_config(MINIMAL).network
    (tmp_path / "bad.yaml").write_text("network: nowhere.yaml\n")
    with pytest.raises(ValidationError):
        load_config(tmp_path / "bad.yaml")


def test_auto_beta_needs_zeta():
    text = MINIMAL + "utilities:\n  s1: {coefficients: [0, 1, 0, 0, 0, 0, 0], beta: auto, zeta: null}\n"
    with pytest.raises(ValidationError) as exc:
        loads_config(text)
    assert any("zeta" in f for f in exc.value.failures)


# -- built-in scenario ---------------------------------------------------------------

def test_fig2_routing_cells():
    cfg = builtin_fig2_scenario()
    routing = cfg.network.routing
    assert set(routing[("b1", "f1")]) == {"b2", "b7"}
    assert set(routing[("b6", "f5")]) == {"d5"}
    assert cfg.metadata.get("reconstructed") is True


def test_fig2_shared_utility():
    cfg = builtin_fig2_scenario()
    net = build_network(cfg.network)
    assert len(net.sources) == 8 and len(net.forwarding) == 8
    coeffs = {cfg.utilities[s].coefficients for s in net.sources}
    assert len(coeffs) == 1
    (c,) = coeffs
    assert c[1:] == (1.763, -20.718, 88.568, -169.102, 145.167, -44.677)
    for s in net.sources:
        assert cfg.utilities[s].xi == 0 and cfg.utilities[s].zeta == 10


def test_fig2_validates():
    cfg = builtin_fig2_scenario()
    net = build_network(cfg.network)
    assert validate_step_sizes(net, resolve_step_sizes(net, cfg)).ok


# -- experiments and traces -------------------------------------------------------------

@pytest.fixture(scope="module")
def toy500(tmp_path_factory):
    cfg = toy_scenario(500)
    out = tmp_path_factory.mktemp("toy")
    res = run_experiment(cfg, out_dir=out)
    return cfg, res


def test_toy_trace_rows_and_capacity(toy500):
    cfg, res = toy500
    table = read_trace(res.trace_path)
    assert len(table) == 500
    assert np.array_equal(table.k, np.arange(1, 501))
    assert table.column("capacity_distance")[-1] < 1e-3
    meta = json.loads(res.meta_path.read_text())
    assert meta["seed"] == cfg.seed and len(meta["config_hash"]) == 64


def test_trace_replay(toy500):
    cfg, res = toy500
    net = build_network(cfg.network)
    diffs = replay_residuals(net, cfg.utilities, read_trace(res.trace_path))
    assert max(diffs.values()) <= 1e-12


def test_byte_identical_reruns(toy500, tmp_path):
    cfg, res = toy500
    again = run_experiment(cfg, out_dir=tmp_path)
    assert again.trace_path.read_bytes() == res.trace_path.read_bytes()
    assert again.meta_path.read_bytes() == res.meta_path.read_bytes()


def test_validate_only_writes_nothing(tmp_path):
    res = run_experiment(toy_scenario(10), out_dir=tmp_path, validate_only=True)
    assert res.summary["step_sizes_ok"]
    assert list(tmp_path.iterdir()) == []


def test_read_trace_rejects_bad_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("k,utility\n1,0.5\n1,0.6\n")
    with pytest.raises(ParseError):
        read_trace(p)
    p.write_text("k,utility\n1,nan\n")
    with pytest.raises(ParseError):
        read_trace(p)
    p.write_text("k,utility\n1\n")
    with pytest.raises(ParseError) as exc:
        read_trace(p)
    assert exc.value.line == 2


# -- rate fitting ------------------------------------------------------------------------

def test_fit_exact_power_laws():
    k = np.arange(1, 1001, dtype=float)
    assert fit_rate_arrays(k, 3.0 / k) == pytest.approx(-1.0, abs=1e-6)
    assert fit_rate_arrays(k, 3.0 / k**2) == pytest.approx(-2.0, abs=1e-6)
    assert fit_rate({"k": k, "conservation": 0.5 / k}) == pytest.approx(-1.0, abs=1e-6)


def test_fit_errors():
    k = np.arange(1, 21, dtype=float)
    with pytest.raises(InsufficientData):
        fit_rate_arrays(k, 1 / k, burn_in=0.1)
    k = np.arange(1, 101, dtype=float)
    y = 1 / k
    y[-1] = 0.0
    with pytest.raises(NonPositiveResiduals):
        fit_rate_arrays(k, y)


def test_fit_on_toy_trace(toy500):
    _, res = toy500
    table = read_trace(res.trace_path)
    assert fit_rate(table, 0.1, "conservation") == pytest.approx(fit_rate(res.trace, 0.1, "conservation"),
                                                                    abs=1e-9)


# -- command line ---------------------------------------------------------------------------

def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "ncnum.harness.cli", *args], capture_output=True,
                          text=True, cwd=cwd)


def test_cli_scenario_and_validate(tmp_path):
    cfg = tmp_path / "toy.yaml"
    assert cli("scenario", "toy", "--out", str(cfg)).returncode == 0
    p = cli("run", "--config", str(cfg), "--validate-only", "--out", str(tmp_path / "o"))
    assert p.returncode == 0, p.stderr
    assert not (tmp_path / "o").exists()


def test_cli_run_writes_trace(tmp_path):
    cfg = tmp_path / "toy.yaml"
    write_config(toy_scenario(30), cfg)
    p = cli("run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--plot")
    assert p.returncode == 0, p.stderr
    assert (tmp_path / "o" / "trace.csv").exists()
    assert (tmp_path / "o" / "trace.png").exists()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL + "iterations: 0\n")
    p = cli("run", "--config", str(bad))
    assert p.returncode == 1
    assert "iterations" in p.stderr
    assert cli("run", "--config", str(tmp_path / "missing.yaml")).returncode == 1
    inflated = tmp_path / "inflated.yaml"
    inflated.write_text(MINIMAL + "step_sizes: {mode: explicit, gamma: 0.1, tau_s: {s1: 10}, d_s: {s1: 4},"
                        " tau: {'x[f1,b1,l2]': 10}, d: {'x[f1,b1,l2]': 4}, kappa: {b1/l2: 1}}\n")
    assert cli("certify", "--config", str(inflated)).returncode == 1
    assert cli("run", "--config", str(inflated), "--out", str(tmp_path / "x")).returncode == 1


def test_cli_baseline(tmp_path):
    cfg = tmp_path / "single.yaml"
    cfg.write_text(MINIMAL)
    p = cli("baseline", "--config", str(cfg), "--grid-step", "0.5")
    assert p.returncode == 0, p.stderr
    out = json.loads(p.stdout)
    assert out["upper_bound_holds"]
