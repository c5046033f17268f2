"""Polynomial-like utilities, moment vectors and Hankel moment matrices.

A utility of order ``ell`` (even) is ``U(r) = sum_j p_j r**(j/ell)``.  With
``y = r**(1/ell)`` it is a polynomial in ``y``, and its value at a single rate
equals ``p @ m`` for the moments ``m_j = y**j`` of the Dirac measure at ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from ncnum.errors import IndexOverflow, NegativeRate, OddOrder
from ncnum.geometry.eigen import eig_sym

__all__ = [
    "STEP_COEFFICIENTS",
    "UtilitySpec",
    "MomentCheck",
    "eval_utility",
    "hankel",
    "dirac_moments",
    "moment_matrices",
    "check_moment_feasible",
    "utility_moments",
]

# degree-6 step-like utility used by the built-in scenario (p_0 = 0)
STEP_COEFFICIENTS = (0.0, 1.763, -20.718, 88.568, -169.102, 145.167, -44.677)

MomentVector = np.ndarray


@dataclass(frozen=True)
class UtilitySpec:
    """Utility of one source and its rate bounds.

    Parameters
    ----------
    coefficients : sequence of float
        ``p_0..p_ell``.
    order : int
        ``ell``; must be even.  Defaults to ``len(coefficients) - 1``.
    xi, zeta : float
        Aggregate-rate bounds, ``0 <= xi <= zeta``, ``zeta > 0``.
    beta : float or None
        Bound on ``y**2`` in the moment constraints.  ``None`` selects
        ``zeta**(2/ell)``, the smallest value keeping every admissible rate
        representable.
    """

    coefficients: tuple[float, ...]
    order: int | None = None
    xi: float = 0.0
    zeta: float = 10.0
    beta: float | None = None
    beta_auto: bool = field(default=False, init=False, compare=False)

    def __post_init__(self):
        p = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", p)
        ell = len(p) - 1 if self.order is None else int(self.order)
        object.__setattr__(self, "order", ell)
        if ell <= 0:
            raise ValueError(f"order must be positive, got {ell}")
        if ell % 2:
            raise OddOrder(f"order must be even, got {ell}")
        if len(p) != ell + 1:
            raise ValueError(f"expected {ell + 1} coefficients for order {ell}, got {len(p)}")
        if not np.all(np.isfinite(p)):
            raise ValueError("coefficients must be finite")
        if not (self.zeta > 0 and 0 <= self.xi <= self.zeta):
            raise ValueError(f"need 0 <= xi <= zeta and zeta > 0, got xi={self.xi}, zeta={self.zeta}")
        floor = self.zeta ** (2.0 / ell)
        if self.beta is None:
            object.__setattr__(self, "beta", floor)
            object.__setattr__(self, "beta_auto", True)
        elif not self.beta >= floor * (1 - 1e-12):
            raise ValueError(f"beta={self.beta} is below zeta**(2/ell)={floor}")
        object.__setattr__(self, "xi", float(self.xi))
        object.__setattr__(self, "zeta", float(self.zeta))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def p(self) -> np.ndarray:
        return np.array(self.coefficients)

    @classmethod
    def step_like(cls, xi: float = 0.0, zeta: float = 10.0) -> "UtilitySpec":
        return cls(STEP_COEFFICIENTS, 6, xi, zeta)

    @classmethod
    def linear(cls, order: int = 6, xi: float = 0.0, zeta: float = 10.0, slope: float = 1.0) -> "UtilitySpec":
        """``U(r) = slope * r`` (concave), written in order-``ell`` form."""
        p = np.zeros(order + 1)
        p[order] = slope
        return cls(tuple(p), order, xi, zeta)


def eval_utility(u: UtilitySpec, r):
    """``U(r) = sum_j p_j r**(j/ell)``; ``0**0 = 1`` and ``0**(j/ell) = 0`` for ``j > 0``.

    ``r`` may be a scalar or an array.

    Raises
    ------
    NegativeRate
    """
    ra = np.asarray(r, dtype=float)
    if np.any(ra < 0):
        raise NegativeRate(f"rates must be nonnegative, got min {ra.min()}")
    y = ra ** (1.0 / u.order)
    out = np.zeros_like(y)
    for c in reversed(u.coefficients):  # Horner in y
        out = out * y + c
    return float(out) if out.ndim == 0 else out


def dirac_moments(y: float, order: int) -> MomentVector:
    """Moments ``(1, y, ..., y**order)`` of the Dirac measure at ``y``."""
    return float(y) ** np.arange(order + 1, dtype=float)


def hankel(m, k: int, h: int) -> np.ndarray:
    """Hankel block ``M(k, k+2h)``: entry ``(a, b)`` is ``m[k + a + b]``.

    Raises
    ------
    IndexOverflow
        ``k + 2h`` exceeds the last moment index.
    """
    m = np.asarray(m, dtype=float)
    if k < 0 or h < 0 or k + 2 * h > m.size - 1:
        raise IndexOverflow(f"hankel(k={k}, h={h}) needs m up to index {k + 2 * h}, have {m.size - 1}")
    idx = k + np.add.outer(np.arange(h + 1), np.arange(h + 1))
    return m[idx]


def moment_matrices(m, beta: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """``M(0, ell)`` and the localizing matrix ``beta M(0, ell-2) - M(2, ell)``."""
    h = order // 2
    return hankel(m, 0, h), beta * hankel(m, 0, h - 1) - hankel(m, 2, h - 1)


@dataclass
class MomentCheck:
    feasible: bool
    min_eigenvalues: tuple[float, float]
    witness: np.ndarray | None = None
    witness_name: str | None = None
    witness_eigenvalue: float | None = None

    def __bool__(self) -> bool:
        return self.feasible


def check_moment_feasible(m, beta: float, order: int, tol: float = 1e-9) -> MomentCheck:
    """Test whether ``m`` is the moment sequence of a measure on ``y**2 <= beta``.

    ``m`` is feasible when both ``M(0, ell)`` and ``beta M(0, ell-2) - M(2, ell)``
    have minimum eigenvalue at least ``-tol``.  On failure the first violating
    matrix is returned as the witness.

    Raises
    ------
    OddOrder
    ValueError
        ``m`` has the wrong length or ``m_0`` differs from 1 by more than ``tol``.
    """
    if order <= 0 or order % 2:
        raise OddOrder(f"order must be a positive even integer, got {order}")
    m = np.asarray(m, dtype=float)
    if m.shape != (order + 1,):
        raise ValueError(f"expected {order + 1} moments, got shape {m.shape}")
    if abs(m[0] - 1.0) > tol:
        raise ValueError(f"m_0 must be 1, got {m[0]}")
    H0, H1 = moment_matrices(m, beta, order)
    w0 = float(eig_sym(H0)[0][-1])
    w1 = float(eig_sym(H1)[0][-1])
    out = MomentCheck(w0 >= -tol and w1 >= -tol, (w0, w1))
    if w0 < -tol:
        out.witness, out.witness_name, out.witness_eigenvalue = H0, "M(0,ell)", w0
    elif w1 < -tol:
        out.witness, out.witness_name, out.witness_eigenvalue = H1, "beta*M(0,ell-2)-M(2,ell)", w1
    return out


def utility_moments(u: UtilitySpec, m) -> float:
    """Relaxed utility ``p @ m``."""
    return float(np.dot(u.p, np.asarray(m, dtype=float)))
