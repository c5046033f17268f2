"""Distributed primal-dual method: step sizes, certificate and the round engine."""

from ncnum.dpda.certificate import Certificate, q_certificate, q_matrix, schur_matrix
from ncnum.dpda.diagnostics import BoundReport, Residuals, bound_report, residuals, theta1
from ncnum.dpda.engine import (
    ForwardNodeState,
    InitialPoint,
    Inbox,
    MessageLog,
    RunTrace,
    SourceNodeState,
    build_states,
    forward_update,
    price_update,
    run,
    source_update,
    trace_metrics,
    u_update,
    z_update,
)
from ncnum.dpda.stepsizes import (
    StepCheck,
    StepSizes,
    Violation,
    auto_step_sizes,
    validate_step_sizes,
)

__all__ = [
    "BoundReport",
    "Residuals",
    "bound_report",
    "residuals",
    "theta1",
    "Certificate",
    "q_certificate",
    "q_matrix",
    "schur_matrix",
    "ForwardNodeState",
    "InitialPoint",
    "Inbox",
    "MessageLog",
    "RunTrace",
    "SourceNodeState",
    "build_states",
    "forward_update",
    "price_update",
    "run",
    "source_update",
    "trace_metrics",
    "u_update",
    "z_update",
    "StepCheck",
    "StepSizes",
    "Violation",
    "auto_step_sizes",
    "validate_step_sizes",
]
