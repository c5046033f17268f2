"""Positive-semidefiniteness certificate for a set of step sizes.

With ``D_tau = diag(1/tau)``, ``D_kappa = diag(1/kappa)`` and
``D_gamma = I / gamma`` the block matrix

    Q = [[D_tau, -A^T, -B^T],
         [-A,  D_kappa,   0],
         [-B,     0, D_gamma]]

is PSD exactly when its Schur complement ``D_tau - gamma B^T B - A^T diag(kappa) A``
is, and this is what makes the primal-dual iteration converge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ncnum.dpda.stepsizes import StepSizes, kappa_vector, tau_diagonal
from ncnum.errors import TooLarge
from ncnum.geometry.eigen import eig_sym
from ncnum.network import Network, capacity_matrix, incidence_matrix

__all__ = ["Certificate", "q_matrix", "schur_matrix", "q_certificate"]

PSD_TOL = 1e-8


@dataclass
class Certificate:
    """Outcome of :func:`q_certificate`.

    ``witness`` is a unit vector ``v`` with ``v^T Q v = min_eigenvalue`` when
    the matrix is indefinite.
    """

    psd: bool
    min_eigenvalue: float
    schur_min_eigenvalue: float
    schur_psd: bool
    dimension: int
    witness: np.ndarray | None = None

    @property
    def consistent(self) -> bool:
        """Whether the direct and Schur-reduced tests agree."""
        return self.psd == self.schur_psd


def q_matrix(net: Network, ss: StepSizes) -> np.ndarray:
    A = capacity_matrix(net)
    B = incidence_matrix(net)
    Dt = np.diag(tau_diagonal(net, ss))
    Dk = np.diag(1.0 / kappa_vector(net, ss))
    Dg = np.eye(B.shape[0]) / ss.gamma
    na, nb = A.shape[0], B.shape[0]
    return np.block([
        [Dt, -A.T, -B.T],
        [-A, Dk, np.zeros((na, nb))],
        [-B, np.zeros((nb, na)), Dg],
    ])


def schur_matrix(net: Network, ss: StepSizes) -> np.ndarray:
    A = capacity_matrix(net)
    B = incidence_matrix(net)
    S = np.diag(tau_diagonal(net, ss)) - ss.gamma * B.T @ B - A.T @ (kappa_vector(net, ss)[:, None] * A)
    return 0.5 * (S + S.T)


def q_certificate(net: Network, ss: StepSizes, *, max_dim: int = 600,
                  tol: float = PSD_TOL, method: str = "jacobi") -> Certificate:
    """Materialize ``Q`` and its Schur complement and report their smallest eigenvalues.

    Raises
    ------
    TooLarge
        ``Q`` would have more than ``max_dim`` rows.
    """
    n = net.dim + len(net.capacity_rows) + len(net.conservation_rows)
    if n > max_dim:
        raise TooLarge(f"Q would be {n}x{n}; the cap is {max_dim}")
    Q = q_matrix(net, ss)
    w, V = eig_sym(Q, method=method)
    ws, _ = eig_sym(schur_matrix(net, ss), method=method)
    qmin = float(w[-1])
    smin = float(ws[-1]) if ws.size else 0.0
    cert = Certificate(qmin >= -tol, qmin, smin, smin >= -tol, n)
    if not cert.psd:
        cert.witness = V[:, -1].copy()
    return cert
