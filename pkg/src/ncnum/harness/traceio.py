"""Trace files: one CSV per run plus a JSON sidecar.

Columns are ``k``, ``utility``, ``conservation_residual``, ``capacity_distance``,
optionally ``utility_gap``, then ``rbar_<source>``, ``load_<link>`` and
``xbar_<variable>``.  Floats use 17 significant digits, so the stored
averages reproduce the residual columns exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ncnum.dpda.engine import RunTrace, trace_metrics
from ncnum.errors import DimensionMismatch, ParseError
from ncnum.network import Network, Var

__all__ = ["TraceTable", "column_name", "trace_rows", "write_trace", "read_trace",
           "write_sidecar", "replay_residuals", "config_hash", "versions"]

FLOAT_FMT = ".17g"


def column_name(v: Var) -> str:
    if v.kind == "x":
        return f"xbar_x.{v.flow}.{v.node}.{v.link}"
    if v.kind == "m":
        return f"xbar_m.{v.node}.{v.j}"
    return f"xbar_r.{v.node}"


@dataclass
class TraceTable:
    """A trace read back from disk."""

    header: list[str]
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.header.index(name)]
        except ValueError:
            raise KeyError(name) from None

    @property
    def k(self) -> np.ndarray:
        return self.column("k")

    def xbar(self, net: Network) -> np.ndarray:
        cols = [self.header.index(column_name(v)) for v in net.variables]
        return self.data[:, cols]

    def __len__(self) -> int:
        return self.data.shape[0]


def trace_rows(trace: RunTrace, utility_gap: np.ndarray | None = None, stride: int = 1):
    """Header and the selected rows (every ``stride``-th ``K`` and always the last)."""
    net = trace.net
    header = ["k", "utility", "conservation_residual", "capacity_distance"]
    if utility_gap is not None:
        header.append("utility_gap")
    header += [f"rbar_{s}" for s in net.sources]
    header += [f"load_{l}" for l in net.links]
    header += [column_name(v) for v in net.variables]
    K = trace.K
    sel = [k for k in range(1, K + 1) if k % stride == 0 or k == K]
    rows = []
    for k in sel:
        j = k - 1
        vals = [trace.utility[j], trace.conservation[j], trace.capacity_distance[j]]
        if utility_gap is not None:
            vals.append(utility_gap[j])
        row = [str(k)] + [format(float(v), FLOAT_FMT) for v in vals]
        row += [format(float(v), FLOAT_FMT) for v in trace.rbar[j]]
        row += [format(float(v), FLOAT_FMT) for v in trace.link_load[j]]
        row += [format(float(v), FLOAT_FMT) for v in trace.xbar[j]]
        rows.append(row)
    return header, rows


def write_trace(trace: RunTrace, path: str | os.PathLike, utility_gap=None, stride: int = 1) -> Path:
    if stride < 1:
        raise ValueError("stride must be positive")
    header, rows = trace_rows(trace, utility_gap, stride)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_trace(path: str | os.PathLike) -> TraceTable:
    """Read a trace CSV and check its invariants.

    Raises
    ------
    ParseError
        Non-numeric or non-finite fields, ragged rows, or ``k`` not strictly increasing.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty trace file", line=1) from None
        rows = []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=ln)
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(str(exc), line=ln) from None
            bad = [h for h, v in zip(header, vals) if not np.isfinite(v)]
            if bad:
                raise ParseError("non-finite value", line=ln, field=bad[0])
            rows.append(vals)
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    if "k" not in header:
        raise ParseError("missing k column", line=1, field="k")
    k = data[:, header.index("k")]
    if np.any(np.diff(k) <= 0):
        raise ParseError("k is not strictly increasing", field="k")
    return TraceTable(header, data)


def replay_residuals(net: Network, utilities, table: TraceTable) -> dict[str, float]:
    """Largest difference between stored residual columns and ones recomputed from ``xbar``."""
    try:
        X = table.xbar(net)
    except ValueError:
        raise DimensionMismatch("trace columns do not match the network variables") from None
    m = trace_metrics(net, utilities, X)
    out = {
        "utility": float(np.abs(m["utility"] - table.column("utility")).max(initial=0.0)),
        "conservation_residual": float(np.abs(m["conservation"] - table.column("conservation_residual")).max(initial=0.0)),
        "capacity_distance": float(np.abs(m["capacity_distance"] - table.column("capacity_distance")).max(initial=0.0)),
    }
    for k, s in enumerate(net.sources):
        out[f"rbar_{s}"] = float(np.abs(m["rbar"][:, k] - table.column(f"rbar_{s}")).max(initial=0.0))
    return out


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def versions() -> dict[str, str]:
    import numpy
    import ncnum

    out = {"python": platform.python_version(), "numpy": numpy.__version__, "ncnum": ncnum.__version__}
    for mod in ("numba", "cvxpy", "yaml"):
        try:
            out[mod] = __import__(mod).__version__
        except ImportError:
            pass
    return out


def write_sidecar(path: str | os.PathLike, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path
