"""Command-line interface.

Exit codes: 0 on success, 1 on validation failure, 2 on runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ncnum.errors import (
    NCNumError,
    NetworkError,
    ParseError,
    StepSizeInvalid,
    ValidationError,
)

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncnum", description="Distributed rate allocation with non-concave utilities.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the distributed algorithm and write a trace")
    r.add_argument("--config", required=True, help="experiment YAML file")
    r.add_argument("--iters", type=int, help="number of rounds (overrides the config)")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="seed for generated networks (overrides the config)")
    r.add_argument("--validate-only", action="store_true", help="only validate the network and step sizes")
    r.add_argument("--plot", action="store_true", help="also write trace.png")

    c = sub.add_parser("certify", help="report the step-size certificate")
    c.add_argument("--config", required=True)
    c.add_argument("--max-dim", type=int, default=600)

    b = sub.add_parser("baseline", help="centralized relaxation and grid oracle")
    b.add_argument("--config", required=True)
    b.add_argument("--grid-step", type=float, required=True)

    s = sub.add_parser("scenario", help="write a built-in scenario")
    s.add_argument("name", choices=["fig2", "toy"])
    s.add_argument("--out", required=True, help="path of the YAML file to write")
    return p


def _load(args):
    from ncnum.harness.config import load_config

    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "iters", None) is not None:
        changes["iterations"] = args.iters
    if getattr(args, "out", None) is not None:
        changes["output"] = args.out
    if getattr(args, "seed", None) is not None and args.seed != cfg.seed:
        # generated networks depend on the seed, so reload with the new one
        import yaml

        from ncnum.harness.config import loads_config

        data = yaml.safe_load(Path(args.config).read_text())
        data["seed"] = args.seed
        cfg = loads_config(yaml.safe_dump(data), base=Path(args.config).parent)
    if changes.get("iterations") is not None and changes["iterations"] < 1:
        raise ValidationError(["iterations: must be at least 1"])
    return cfg.with_(**changes) if changes else cfg


def _cmd_run(args) -> int:
    from ncnum.harness.experiment import run_experiment
    from ncnum.harness.plotting import plot_trace
    from ncnum.harness.traceio import read_trace

    cfg = _load(args)
    res = run_experiment(cfg, validate_only=args.validate_only)
    print(json.dumps(res.summary, indent=2, default=str))
    if args.validate_only:
        return EXIT_OK if res.check.ok else EXIT_INVALID
    print(f"trace: {res.trace_path}")
    if args.plot:
        ref = res.reference.objective if res.reference is not None else None
        print(f"figure: {plot_trace(read_trace(res.trace_path), res.trace_path.with_suffix('.png'), ref)}")
    return EXIT_OK


def _cmd_certify(args) -> int:
    from ncnum.dpda import q_certificate
    from ncnum.harness.experiment import validate_experiment

    cfg = _load(args)
    net, ss, check, _ = validate_experiment(cfg)
    cert = q_certificate(net, ss, max_dim=args.max_dim)
    out = {"dimension": cert.dimension, "psd": cert.psd, "min_eigenvalue": cert.min_eigenvalue,
           "schur_min_eigenvalue": cert.schur_min_eigenvalue, "step_sizes_ok": check.ok,
           "violations": [str(v) for v in check.violations]}
    if cert.witness is not None:
        out["witness"] = cert.witness.tolist()
    print(json.dumps(out, indent=2))
    return EXIT_OK if cert.psd else EXIT_INVALID


def _cmd_baseline(args) -> int:
    from ncnum.baselines import brute_force_nonconvex, centralized_solve, relaxation_gap
    from ncnum.network import build_network

    cfg = _load(args)
    net = build_network(cfg.network)
    ref = centralized_solve(net, cfg.utilities)
    oracle = brute_force_nonconvex(net, cfg.utilities, args.grid_step)
    gap = relaxation_gap(ref, oracle)
    print(json.dumps({"relaxation_objective": ref.objective, "relaxation_r": ref.r,
                      "oracle_objective": oracle.objective, "oracle_r": oracle.r,
                      "grid_step": oracle.grid_step, "gap": gap.gap,
                      "upper_bound_holds": gap.upper_bound_holds}, indent=2))
    return EXIT_OK if gap.upper_bound_holds else EXIT_INVALID


def _cmd_scenario(args) -> int:
    from ncnum.harness.config import write_config
    from ncnum.harness.scenarios import SCENARIOS

    path = write_config(SCENARIOS[args.name](), args.out)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = {"run": _cmd_run, "certify": _cmd_certify, "baseline": _cmd_baseline,
           "scenario": _cmd_scenario}[args.command]
    try:
        return cmd(args)
    except (ValidationError, ParseError, StepSizeInvalid, NetworkError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NCNumError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
