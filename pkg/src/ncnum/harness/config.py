"""Experiment configuration: a YAML document with network, utilities and step sizes.

Schema (all keys optional unless marked)::

    network:            # required; a mapping, or a path relative to this file
      order: 6
      sources: [s1]
      forwarding: [b1]
      destinations: [d1]
      links:            # bidirectional defaults to true
        - {id: l1, ends: [s1, b1], capacity: 10, bidirectional: false}
      flows:
        - {id: f1, source: s1, destination: d1}
      routing:          # forwarding node -> flow -> next hops
        b1: {f1: [d1]}
      source_links: {s1: [l1]}
    utilities:          # "default" applies to sources without an entry
      default: {coefficients: [0, 1.763, ...], order: 6, xi: 0, zeta: 10, beta: auto}
    step_sizes: {mode: auto, gamma: 0.1, margin: 0.9, strict: true}
    iterations: 1000
    output: out
    seed: 0
    stride: 1
    tolerances: {projection: 1.0e-9, feasibility: 1.0e-8}
    reference: {method: conic}
    metadata: {reconstructed: false}

``network`` may instead be ``{generator: random, sources: 2, forwarding: 3}``;
the instance is then drawn with ``seed``.  Explicit step sizes use
``mode: explicit`` with ``tau_s``/``d_s`` keyed by source, ``tau``/``d`` keyed
by variable name (``x[f1,b1,l2]``) and ``kappa`` keyed by ``b1/l2``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from ncnum.errors import NCNumError, ParseError, ValidationError
from ncnum.moments import STEP_COEFFICIENTS, UtilitySpec
from ncnum.network import Flow, Link, NetworkSpec, build_network

__all__ = [
    "StepSizeConfig",
    "ExperimentConfig",
    "load_config",
    "loads_config",
    "write_config",
    "dumps_config",
    "config_to_dict",
    "network_to_dict",
    "network_from_dict",
    "utility_to_dict",
]

DEFAULT_MARGIN = 0.9
DEFAULT_GAMMA = 0.1


@dataclass(frozen=True)
class StepSizeConfig:
    mode: str = "auto"
    gamma: float = DEFAULT_GAMMA
    margin: float = DEFAULT_MARGIN
    strict: bool = True
    tau_s: dict[str, float] = field(default_factory=dict)
    d_s: dict[str, float] = field(default_factory=dict)
    tau: dict[str, float] = field(default_factory=dict)
    d: dict[str, float] = field(default_factory=dict)
    kappa: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    utilities: dict[str, UtilitySpec]
    step_sizes: StepSizeConfig = StepSizeConfig()
    iterations: int = 1000
    output: str = "out"
    seed: int = 0
    stride: int = 1
    projection_tol: float = 1e-9
    feasibility_tol: float = 1e-8
    reference_method: str = "conic"
    metadata: dict[str, Any] = field(default_factory=dict)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# -- line bookkeeping -------------------------------------------------------------

def _line_map(text: str) -> dict[tuple, int]:
    """1-based line of every mapping value and sequence item, keyed by path."""
    out: dict[tuple, int] = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return out


def _fmt(path: tuple) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s


class _Collector:
    def __init__(self, lines: dict[tuple, int]):
        self.lines = lines
        self.failures: list[str] = []

    def line(self, path: tuple) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get(())

    def fail(self, path: tuple, message: str) -> None:
        ln = self.line(path)
        where = f" (line {ln})" if ln else ""
        self.failures.append(f"{_fmt(path) or '<root>'}: {message}{where}")


# -- network <-> dict -------------------------------------------------------------

def network_to_dict(spec: NetworkSpec) -> dict:
    kinds = {"source": [], "forwarding": [], "destination": []}
    for n, k in spec.nodes.items():
        kinds[k].append(n)
    routing: dict[str, dict[str, list[str]]] = {}
    for (b, f), hops in spec.routing.items():
        routing.setdefault(b, {})[f] = list(hops)
    return {
        "order": spec.order,
        "sources": kinds["source"],
        "forwarding": kinds["forwarding"],
        "destinations": kinds["destination"],
        "links": [{"id": l.id, "ends": list(l.ends), "capacity": l.capacity,
                   "bidirectional": l.bidirectional} for l in spec.links],
        "flows": [{"id": f.id, "source": f.source, "destination": f.destination} for f in spec.flows],
        "routing": routing,
        "source_links": {s: list(ls) for s, ls in spec.source_links.items()},
    }


def _num(col: _Collector, path, value, *, positive=False, integer=False, default=None):
    if value is None:
        if default is None:
            col.fail(path, "missing")
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        col.fail(path, f"expected a number, got {value!r}")
        return default
    if integer and value != int(value):
        col.fail(path, f"expected an integer, got {value!r}")
        return default
    if positive and not value > 0:
        col.fail(path, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _names(col: _Collector, path, value) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        col.fail(path, "expected a list of names")
        return []
    return list(value)


def _network(col: _Collector, d: Any, path: tuple = ("network",)) -> NetworkSpec | None:
    if not isinstance(d, dict):
        col.fail(path, "expected a mapping")
        return None
    nodes: dict[str, str] = {}
    for key, kind in (("sources", "source"), ("forwarding", "forwarding"), ("destinations", "destination")):
        for n in _names(col, path + (key,), d.get(key)):
            nodes[n] = kind
    links = []
    raw_links = d.get("links") or []
    if not isinstance(raw_links, list):
        col.fail(path + ("links",), "expected a list")
        raw_links = []
    for k, item in enumerate(raw_links):
        p = path + ("links", k)
        if not isinstance(item, dict):
            col.fail(p, "expected a mapping")
            continue
        lid = item.get("id", f"#{k}")
        ends = item.get("ends")
        if not (isinstance(ends, list) and len(ends) == 2 and all(isinstance(e, str) for e in ends)):
            col.fail(p + ("ends",), f"link {lid!r} needs two endpoint names")
            continue
        if "capacity" not in item:
            col.fail(p + ("capacity",), f"link {lid!r} has no capacity")
            continue
        cap = _num(col, p + ("capacity",), item["capacity"], positive=True, default=1.0)
        bidir = item.get("bidirectional", True)
        if not isinstance(bidir, bool):
            col.fail(p + ("bidirectional",), "expected true or false")
            bidir = True
        links.append(Link(str(lid), (ends[0], ends[1]), cap, bidir))
    flows = []
    for k, item in enumerate(d.get("flows") or []):
        p = path + ("flows", k)
        if not isinstance(item, dict) or not all(isinstance(item.get(x), str) for x in ("id", "source", "destination")):
            col.fail(p, "flow needs string id, source and destination")
            continue
        flows.append(Flow(item["id"], item["source"], item["destination"]))
    routing = {}
    raw = d.get("routing") or {}
    if not isinstance(raw, dict):
        col.fail(path + ("routing",), "expected a mapping node -> flow -> next hops")
        raw = {}
    for b, per_flow in raw.items():
        if not isinstance(per_flow, dict):
            col.fail(path + ("routing", b), "expected a mapping flow -> next hops")
            continue
        for f, hops in per_flow.items():
            routing[(str(b), str(f))] = tuple(_names(col, path + ("routing", b, f), hops))
    sl = {}
    for s, ls in (d.get("source_links") or {}).items():
        sl[str(s)] = tuple(_names(col, path + ("source_links", s), ls))
    order = _num(col, path + ("order",), d.get("order", 6), integer=True, positive=True, default=6)
    return NetworkSpec(nodes, tuple(links), tuple(flows), routing, sl, order)


def utility_to_dict(u: UtilitySpec) -> dict:
    return {"coefficients": list(u.coefficients), "order": u.order, "xi": u.xi, "zeta": u.zeta,
            "beta": "auto" if u.beta_auto else u.beta}


def _utility(col: _Collector, d: Any, path: tuple, order: int) -> UtilitySpec | None:
    if not isinstance(d, dict):
        col.fail(path, "expected a mapping")
        return None
    n0 = len(col.failures)
    coeffs = d.get("coefficients")
    if coeffs is None:
        col.fail(path + ("coefficients",), "missing")
    elif not isinstance(coeffs, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                                                 for c in coeffs):
        col.fail(path + ("coefficients",), "expected a list of numbers")
    ell = _num(col, path + ("order",), d.get("order", order), integer=True, positive=True, default=order)
    xi = _num(col, path + ("xi",), d.get("xi", 0.0), default=0.0)
    beta = d.get("beta", "auto")
    if beta == "auto":
        beta = None
        if d.get("zeta") is None:
            col.fail(path + ("zeta",), "automatic beta needs zeta")
    else:
        beta = _num(col, path + ("beta",), beta, positive=True)
    zeta = _num(col, path + ("zeta",), d.get("zeta", 10.0), positive=True, default=10.0)
    if ell != order:
        col.fail(path + ("order",), f"order {ell} differs from the network order {order}")
    if len(col.failures) > n0:
        return None
    try:
        return UtilitySpec(tuple(coeffs), ell, xi, zeta, beta)
    except (ValueError, NCNumError) as exc:
        col.fail(path, str(exc))
        return None


def _step_sizes(col: _Collector, d: Any) -> StepSizeConfig:
    path = ("step_sizes",)
    if d is None:
        return StepSizeConfig()
    if d == "auto":
        return StepSizeConfig()
    if not isinstance(d, dict):
        col.fail(path, "expected 'auto' or a mapping")
        return StepSizeConfig()
    mode = d.get("mode", "auto")
    if mode not in ("auto", "explicit"):
        col.fail(path + ("mode",), f"expected auto or explicit, got {mode!r}")
    gamma = _num(col, path + ("gamma",), d.get("gamma", DEFAULT_GAMMA), positive=True, default=DEFAULT_GAMMA)
    margin = _num(col, path + ("margin",), d.get("margin", DEFAULT_MARGIN), positive=True,
                  default=DEFAULT_MARGIN)
    if margin > 1:
        col.fail(path + ("margin",), "must lie in (0, 1]")
    strict = d.get("strict", True)
    if not isinstance(strict, bool):
        col.fail(path + ("strict",), "expected true or false")
        strict = True
    tables = {}
    for key in ("tau_s", "d_s", "tau", "d", "kappa"):
        raw = d.get(key) or {}
        if not isinstance(raw, dict):
            col.fail(path + (key,), "expected a mapping")
            raw = {}
        tables[key] = {str(k): _num(col, path + (key, k), v, positive=True, default=1.0) for k, v in raw.items()}
    if mode == "explicit" and not tables["tau_s"]:
        col.fail(path + ("tau_s",), "explicit step sizes need tau_s")
    return StepSizeConfig(mode, gamma, margin, strict, **tables)


def _parse(data: Any, lines: dict[tuple, int], base: Path | None) -> ExperimentConfig:
    col = _Collector(lines)
    if not isinstance(data, dict):
        raise ParseError("the configuration must be a mapping", line=1)
    known = {"network", "utilities", "step_sizes", "iterations", "output", "seed", "stride",
             "tolerances", "reference", "metadata"}
    for k in data:
        if k not in known:
            col.fail((k,), "unknown key")
    seed = _num(col, ("seed",), data.get("seed", 0), integer=True, default=0)
    raw_net = data.get("network")
    spec = None
    if raw_net is None:
        col.fail(("network",), "missing")
    elif isinstance(raw_net, str):
        p = Path(raw_net)
        if base is not None and not p.is_absolute():
            p = base / p
        if not p.is_file():
            col.fail(("network",), f"network file {str(p)!r} does not exist")
        else:
            text = p.read_text()
            try:
                sub = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                raise ParseError(f"{p}: {exc}", line=mark.line + 1 if mark else None, field="network") from exc
            sub_col = _Collector(_line_map(text))
            spec = _network(sub_col, sub, ())
            col.failures += [f"{p.name}: {f}" for f in sub_col.failures]
    elif isinstance(raw_net, dict) and raw_net.get("generator") is not None:
        from ncnum.harness.scenarios import random_network_spec

        if raw_net["generator"] != "random":
            col.fail(("network", "generator"), f"unknown generator {raw_net['generator']!r}")
        else:
            try:
                spec = random_network_spec(
                    seed=seed if seed is not None else 0,
                    n_sources=_num(col, ("network", "sources"), raw_net.get("sources", 2), integer=True,
                                   positive=True, default=2),
                    n_forwarding=_num(col, ("network", "forwarding"), raw_net.get("forwarding", 3),
                                      integer=True, positive=True, default=3))
            except (ValueError, NCNumError) as exc:
                col.fail(("network",), str(exc))
    else:
        spec = _network(col, raw_net)
    if spec is not None and not col.failures:
        try:
            build_network(spec)
        except NCNumError as exc:
            col.fail(("network",), str(exc))

    order = spec.order if spec is not None else 6
    sources = [n for n, k in spec.nodes.items() if k == "source"] if spec is not None else []
    raw_u = data.get("utilities")
    utilities: dict[str, UtilitySpec] = {}
    if raw_u is None:
        if order == 6:
            for s in sources:
                utilities[s] = UtilitySpec(STEP_COEFFICIENTS, 6, 0.0, 10.0)
        else:
            col.fail(("utilities",), f"missing (the default utility has order 6, the network {order})")
    elif not isinstance(raw_u, dict):
        col.fail(("utilities",), "expected a mapping source -> utility")
    else:
        default = None
        if "default" in raw_u:
            default = _utility(col, raw_u["default"], ("utilities", "default"), order)
        for k in raw_u:
            if k != "default" and k not in sources:
                col.fail(("utilities", k), "not a source of the network")
        for s in sources:
            if s in raw_u:
                u = _utility(col, raw_u[s], ("utilities", s), order)
            else:
                u = default
                if u is None and "default" not in raw_u:
                    col.fail(("utilities", s), "no utility and no default")
            if u is not None:
                utilities[s] = u

    ss = _step_sizes(col, data.get("step_sizes"))
    iterations = _num(col, ("iterations",), data.get("iterations", 1000), integer=True, default=1000)
    if iterations is not None and iterations < 1:
        col.fail(("iterations",), "must be at least 1")
    stride = _num(col, ("stride",), data.get("stride", 1), integer=True, positive=True, default=1)
    output = data.get("output", "out")
    if not isinstance(output, str):
        col.fail(("output",), "expected a path")
        output = "out"
    tol = data.get("tolerances") or {}
    if not isinstance(tol, dict):
        col.fail(("tolerances",), "expected a mapping")
        tol = {}
    ptol = _num(col, ("tolerances", "projection"), tol.get("projection", 1e-9), positive=True, default=1e-9)
    ftol = _num(col, ("tolerances", "feasibility"), tol.get("feasibility", 1e-8), positive=True, default=1e-8)
    ref = data.get("reference") or {}
    method = ref.get("method", "conic") if isinstance(ref, dict) else None
    if method not in ("conic", "pdhg", "none"):
        col.fail(("reference", "method"), f"expected conic, pdhg or none, got {method!r}")
    meta = data.get("metadata") or {}
    if not isinstance(meta, dict):
        col.fail(("metadata",), "expected a mapping")
        meta = {}
    if col.failures:
        raise ValidationError(col.failures)
    return ExperimentConfig(spec, utilities, ss, iterations, output, seed, stride, ptol, ftol,
                            method, dict(meta))


def loads_config(text: str, base: str | os.PathLike | None = None) -> ExperimentConfig:
    """Parse a configuration document.

    Raises
    ------
    ParseError
        Malformed YAML; carries the offending line.
    ValidationError
        Every schema or network problem found, each with its field and line.
    """
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(exc), line=mark.line + 1 if mark else None) from exc
    return _parse(data, lines, Path(base) if base is not None else None)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    return loads_config(path.read_text(), base=path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    ss = cfg.step_sizes
    step = {"mode": ss.mode, "gamma": ss.gamma, "margin": ss.margin, "strict": ss.strict}
    for key in ("tau_s", "d_s", "tau", "d", "kappa"):
        if getattr(ss, key):
            step[key] = dict(getattr(ss, key))
    return {
        "network": network_to_dict(cfg.network),
        "utilities": {s: utility_to_dict(u) for s, u in cfg.utilities.items()},
        "step_sizes": step,
        "iterations": cfg.iterations,
        "output": cfg.output,
        "seed": cfg.seed,
        "stride": cfg.stride,
        "tolerances": {"projection": cfg.projection_tol, "feasibility": cfg.feasibility_tol},
        "reference": {"method": cfg.reference_method},
        "metadata": dict(cfg.metadata),
    }


def dumps_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def write_config(cfg: ExperimentConfig, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(cfg))
    return path


def network_from_dict(d: dict) -> NetworkSpec:
    """Network mapping in the configuration schema to a :class:`NetworkSpec`.

    Raises
    ------
    ValidationError
    """
    col = _Collector({})
    spec = _network(col, d, ())
    if col.failures:
        raise ValidationError(col.failures)
    return spec
