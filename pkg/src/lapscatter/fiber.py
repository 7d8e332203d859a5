"""Fiber spaces and evaluation operators at a regular energy.

With phi = (1/pi) Im T(lam + i0) and eta = sqrt(phi), the fiber at lam is the
range of eta.  A regular vector f = F* beta is evaluated as
``E_lam f = sum_j beta_j eta_j`` (eta_j the j-th column), expressed in an
orthonormal basis Q of the fiber: ``E = Q* eta``.  Because the duality
pairing in (beta, gamma) coordinates is the plain Euclidean product, the
diamond adjoint is the conjugate transpose ``E*``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LAPViolation
from .lap import BoundaryResolvent

RANK_TOL = 1e-8


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    V = np.array(vectors, dtype=complex)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    piv = V[idx, np.arange(V.shape[1])]
    ph = np.where(np.abs(piv) > 0, piv / np.abs(np.where(piv == 0, 1, piv)), 1.0)
    return V / ph


def phi_matrix(T, tol: float = 1e-10) -> np.ndarray:
    """phi = (1/pi) Im T, symmetrized; raises LAPViolation if not PSD."""
    T = T.T if isinstance(T, BoundaryResolvent) else np.asarray(T, dtype=complex)
    phi = (T - T.conj().T) / (2j * np.pi)
    phi = 0.5 * (phi + phi.conj().T)
    if phi.size:
        lo = float(np.linalg.eigvalsh(phi).min())
        scale = max(1.0, float(np.abs(phi).max()))
        if lo < -tol * scale:
            raise LAPViolation(f"LAP violation: phi has eigenvalue {lo:.3e}")
    return phi


def eta_matrix(phi: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD matrix.

    Eigenvalues below a round-off floor (64 eps times the largest) are
    clamped to zero so that their square roots do not pose as fiber
    directions.
    """
    phi = 0.5 * (phi + np.conj(phi).T)
    w, V = np.linalg.eigh(phi)
    floor = 64 * np.finfo(float).eps * max(float(np.abs(w).max(initial=0.0)), 0.0)
    w = np.where(w > floor, w, 0.0)
    return (V * np.sqrt(w)) @ V.conj().T


def fiber_space(eta: np.ndarray, rank_tol: float = RANK_TOL):
    """Orthonormal basis of ran eta and its dimension.

    The rank threshold applies to phi = eta^2: eigenvectors of eta with
    eigenvalue above ``sqrt(rank_tol)`` times the largest are kept, in
    decreasing order, with phases fixed by ``fix_phases``.
    """
    eta = 0.5 * (eta + np.conj(eta).T)
    w, V = np.linalg.eigh(eta)
    top = float(w.max(initial=0.0))
    if top <= 0.0:
        return np.zeros((eta.shape[0], 0), dtype=complex), 0
    keep = np.where(w > np.sqrt(rank_tol) * top)[0][::-1]
    return fix_phases(V[:, keep]), len(keep)


@dataclass(frozen=True, eq=False)
class FiberData:
    lam: float
    phi: np.ndarray
    eta: np.ndarray
    basis: np.ndarray
    rank: int
    rank_tol: float = RANK_TOL
    window: tuple | None = None

    @property
    def m(self) -> int:
        return self.phi.shape[0]


def fiber_from_phi(phi: np.ndarray, rank_tol: float = RANK_TOL, tol: float = 1e-10):
    """eta, fiber basis and rank from one eigendecomposition of phi.

    Equivalent to ``phi_matrix`` + ``eta_matrix`` + ``fiber_space``.
    """
    phi = 0.5 * (phi + np.conj(phi).T)
    w, V = np.linalg.eigh(phi)
    top = float(np.abs(w).max(initial=0.0))
    if w.size and w.min() < -tol * max(1.0, float(np.abs(phi).max())):
        raise LAPViolation(f"LAP violation: phi has eigenvalue {w.min():.3e}")
    w = np.where(w > 64 * np.finfo(float).eps * top, w, 0.0)
    eta = (V * np.sqrt(w)) @ V.conj().T
    if top <= 0.0 or not np.any(w > 0):
        return eta, np.zeros((phi.shape[0], 0), dtype=complex), 0
    keep = np.where(np.sqrt(w) > np.sqrt(rank_tol) * np.sqrt(w.max()))[0][::-1]
    return eta, fix_phases(V[:, keep]), len(keep)


def build_fiber(T, rank_tol: float = RANK_TOL, window=None) -> FiberData:
    lam = T.lam if isinstance(T, BoundaryResolvent) else float("nan")
    if window is None and isinstance(T, BoundaryResolvent):
        window = T.window
    Tm = T.T if isinstance(T, BoundaryResolvent) else np.asarray(T, dtype=complex)
    phi = (Tm - Tm.conj().T) / (2j * np.pi)
    phi = 0.5 * (phi + phi.conj().T)
    eta, Q, r = fiber_from_phi(phi, rank_tol)
    return FiberData(lam, phi, eta, Q, r, rank_tol, window)


@dataclass(frozen=True, eq=False)
class EvaluationOperator:
    """E: beta-coordinates -> fiber coordinates, an r x m matrix."""

    lam: float
    matrix: np.ndarray
    window: tuple | None = None

    @property
    def rank(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    @property
    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def __call__(self, beta) -> np.ndarray:
        beta = np.asarray(getattr(beta, "coords", beta), dtype=complex)
        if beta.shape[0] != self.m:
            raise ConfigError(f"expected {self.m} coordinates, got {beta.shape[0]}")
        return self.matrix @ beta


def evaluation_operator(fiber: FiberData, rigging=None, window=None) -> EvaluationOperator:
    if rigging is not None and window is None and rigging.m != fiber.m:
        raise ConfigError("fiber and rigging have different auxiliary dimensions")
    E = fiber.basis.conj().T @ fiber.eta
    return EvaluationOperator(fiber.lam, E, window if window is not None else fiber.window)


def diamond(op: EvaluationOperator) -> np.ndarray:
    """Diamond adjoint: fiber coordinates -> H-1 coordinates (m x r)."""
    return op.matrix.conj().T


def fiber_basis_vectors(fiber: FiberData, op: EvaluationOperator, tol: float = 1e-9) -> np.ndarray:
    """Columns b_j in H1 coordinates with E b_j the orthonormal fiber basis."""
    if fiber.rank < 1:
        raise ConfigError("fiber is zero-dimensional")
    B = np.linalg.pinv(op.matrix, rcond=fiber.rank_tol)
    G = op.matrix @ B
    if np.max(np.abs(G - np.eye(fiber.rank))) > tol:
        raise LAPViolation("evaluation operator is rank deficient beyond tolerance")
    return B


def fiber_at(T: BoundaryResolvent, rank_tol: float = RANK_TOL):
    """Fiber data and evaluation operator at one energy."""
    fib = build_fiber(T, rank_tol)
    return fib, evaluation_operator(fib)
