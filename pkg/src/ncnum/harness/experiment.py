"""Experiment orchestration: validate, run, compare with the reference and write the trace."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from ncnum.baselines import ReferenceSolution, SolverConfig, centralized_solve
from ncnum.dpda import (
    RunTrace,
    StepCheck,
    StepSizes,
    auto_step_sizes,
    q_certificate,
    residuals,
    run,
    validate_step_sizes,
)
from ncnum.errors import InsufficientData, NonPositiveResiduals, StepSizeInvalid, TooLarge
from ncnum.geometry import ProjectionConfig
from ncnum.harness.config import ExperimentConfig, dumps_config
from ncnum.harness.fitting import fit_rate
from ncnum.harness.traceio import config_hash, versions, write_sidecar, write_trace
from ncnum.network import Network, build_network

__all__ = ["ExperimentResult", "resolve_step_sizes", "validate_experiment", "run_experiment"]

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    summary: dict
    trace: RunTrace | None = None
    reference: ReferenceSolution | None = None
    trace_path: Path | None = None
    meta_path: Path | None = None
    check: StepCheck | None = None
    extra: dict = field(default_factory=dict)


def resolve_step_sizes(net: Network, cfg: ExperimentConfig) -> StepSizes:
    """Step sizes from the configuration (automatic or explicit)."""
    sc = cfg.step_sizes
    if sc.mode == "auto":
        return auto_step_sizes(net, sc.gamma, sc.margin, strict=sc.strict)
    by_name = {str(v): v for v in net.variables}
    rows = {f"{b}/{l}": (b, l) for b, l in net.capacity_rows}
    ss = StepSizes(sc.gamma, dict(sc.tau_s), kappa={}, d_s=dict(sc.d_s))
    for table, target in ((sc.tau, ss.tau), (sc.d, ss.d)):
        for name, val in table.items():
            if name in by_name:
                target[by_name[name]] = val
    for name, val in sc.kappa.items():
        if name in rows:
            ss.kappa[rows[name]] = val
    return ss


def validate_experiment(cfg: ExperimentConfig) -> tuple[Network, StepSizes, StepCheck, dict]:
    net = build_network(cfg.network)
    ss = resolve_step_sizes(net, cfg)
    check = validate_step_sizes(net, ss, strict=cfg.step_sizes.strict)
    report = {
        "network": {"sources": len(net.sources), "forwarding": len(net.forwarding),
                    "links": len(net.links), "dim": net.dim},
        "step_sizes_ok": check.ok,
        "violations": [str(v) for v in check.violations],
    }
    try:
        cert = q_certificate(net, ss)
        report["certificate_min_eigenvalue"] = cert.min_eigenvalue
        report["certificate_psd"] = cert.psd
    except TooLarge as exc:
        report["certificate"] = str(exc)
    return net, ss, check, report


def _fit(trace_like, column: str):
    try:
        return fit_rate(trace_like, 0.1, column)
    except (InsufficientData, NonPositiveResiduals) as exc:
        return f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: ExperimentConfig, *, out_dir: str | Path | None = None,
                   validate_only: bool = False, write: bool = True) -> ExperimentResult:
    """Run the configured experiment.

    Writes ``trace.csv`` and ``trace.json`` under ``out_dir`` (default
    ``cfg.output``) unless ``validate_only`` or ``write`` is false.

    Raises
    ------
    StepSizeInvalid
        The step sizes fail validation (reported before any round runs).
    """
    net, ss, check, report = validate_experiment(cfg)
    if validate_only:
        return ExperimentResult(report, check=check)
    if not check.ok:
        raise StepSizeInvalid(f"{len(check.violations)} step-size condition(s) violated; "
                              f"first: {check.violations[0]}", check.violations)
    proj = ProjectionConfig(tol=cfg.projection_tol, feas_tol=cfg.feasibility_tol)
    trace, mlog = run(net, cfg.utilities, ss, K=cfg.iterations, strict=cfg.step_sizes.strict, proj_cfg=proj)
    ref = None
    gap = None
    if cfg.reference_method != "none":
        ref = centralized_solve(net, cfg.utilities, SolverConfig(method=cfg.reference_method,
                                                                 gamma=ss.gamma))
        gap = residuals(net, trace, ref).utility_gap
    final = trace.final()
    summary = {
        "K": trace.K,
        "utility": final["utility"],
        "conservation_residual": final["conservation_residual"],
        "capacity_distance": final["capacity_distance"],
        "rbar": final["rbar"],
        "nonlocal_reads": len(mlog.nonlocal_reads(net)),
        "rate_conservation": _fit(trace, "conservation"),
    }
    if ref is not None:
        summary["reference_objective"] = ref.objective
        summary["utility_gap"] = float(gap[-1])
        summary["rate_utility_gap"] = _fit((trace.k, gap), "utility_gap")
    result = ExperimentResult(summary, trace, ref, check=check)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.output)
        result.trace_path = write_trace(trace, out / "trace.csv", gap, cfg.stride)
        meta = {
            "config_hash": config_hash(dumps_config(cfg.with_(output=""))),  # placement is not part of the experiment
            "seed": cfg.seed,
            "versions": versions(),
            "reconstructed": bool(cfg.metadata.get("reconstructed", False)),
            "metadata": cfg.metadata,
            "gamma": ss.gamma,
            "stride": cfg.stride,
            "summary": summary,
            "variables": [str(v) for v in net.variables],
        }
        result.meta_path = write_sidecar(out / "trace.json", meta)
    log.info("finished %d rounds: utility %.6g", trace.K, summary["utility"])
    return result
