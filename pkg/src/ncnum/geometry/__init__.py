"""Symmetric eigensolver and the convex projections used by the source update."""

from ncnum.geometry.eigen import eig_sym, min_eig, project_psd
from ncnum.geometry.projections import (
    ADMMState,
    ProjectionConfig,
    ProjectionReport,
    SourcePoint,
    as_violation,
    dykstra,
    project_As,
    project_hypograph,
    project_Xs,
)

__all__ = [
    "eig_sym",
    "min_eig",
    "project_psd",
    "ADMMState",
    "ProjectionConfig",
    "ProjectionReport",
    "SourcePoint",
    "as_violation",
    "dykstra",
    "project_As",
    "project_hypograph",
    "project_Xs",
]
