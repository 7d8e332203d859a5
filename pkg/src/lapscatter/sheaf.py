"""Windowed riggings, gluing unitaries and sections of the fiber sheaf.

For a window w the windowed rigging F_w = F E_w has a Schmidt
representation ``F_w = sum_j kappa_j psi_j <phi_j, .>``.  A regular vector
f = F* g restricts to ``E_w f = F_w* g`` with window coordinates
``beta^w = Psi_w* g`` (Psi_w the left Schmidt vectors).  The windowed fiber at
lam uses ``phi^w = Psi_w* (1/pi) Im T^w(lam + i0) Psi_w``, and the gluing
unitary carries evaluations through one window to evaluations through
another.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GluingError
from .fiber import RANK_TOL, EvaluationOperator, FiberData, eta_matrix, fiber_space, fix_phases, phi_matrix
from .lap import windowed_boundary_value
from .model import H, H1, Rigging, ScaleVector, SpectralModel, _check_window, window_projection


@dataclass(frozen=True, eq=False)
class WindowData:
    """Schmidt data of F E_w: kappa (d,), right (size x d), left (m x d)."""

    interval: tuple[float, float]
    kappa: np.ndarray
    right: np.ndarray
    left: np.ndarray
    projection: np.ndarray
    hs_norm: float

    @property
    def rank(self) -> int:
        return len(self.kappa)


def schmidt_window(model: SpectralModel, rigging: Rigging, interval, rank_tol: float = 1e-12) -> WindowData:
    """SVD of the assembled F E_w matrix.

    Singular values below ``rank_tol`` times ||F|| are dropped.  Each right
    vector is rotated so its largest-magnitude entry is real positive and
    the matching left vector receives the same phase.
    """
    interval = _check_window(interval)
    F = rigging.matrix()
    P = window_projection(model, interval).matrix
    A = F @ P
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    scale = max(float(np.linalg.norm(F, 2)), np.finfo(float).tiny)
    d = int(np.sum(s > rank_tol * scale))
    right = Vh.conj().T[:, :d]
    fixed = fix_phases(right)
    if d:
        c = fixed[np.argmax(np.abs(right), axis=0), np.arange(d)] / right[np.argmax(np.abs(right), axis=0), np.arange(d)]
    else:
        c = np.ones(0)
    left = U[:, :d] * c
    return WindowData(interval, s[:d], fixed, left, P, float(np.linalg.norm(A)))


def beta_coordinates(f: ScaleVector, window: WindowData) -> ScaleVector:
    """Coordinates of E_w f in the Schmidt basis of F_w.

    H1 vectors (auxiliary coordinates g) map to ``Psi_w* g``.  Model vectors
    map to ``<phi_j, E_w f> / kappa_j``.
    """
    if f.window is not None:
        raise ConfigError("vector already carries window coordinates")
    if f.space == H1:
        if f.coords.shape[0] != window.left.shape[0]:
            raise ConfigError("coordinate length does not match the rigging")
        beta = window.left.conj().T @ f.coords
    elif f.space == H:
        beta = (window.right.conj().T @ (window.projection @ f.coords)) / window.kappa
    else:
        raise ConfigError("beta coordinates need an H1 or model vector")
    return ScaleVector(beta, H1, window.interval)


def psi_matrix(w1: WindowData, w2: WindowData) -> np.ndarray:
    """Psi_{jk} = <psi_j^{w1}, psi_k^{w2}>."""
    if w1.left.shape[0] != w2.left.shape[0]:
        raise ConfigError("windows come from different riggings")
    return w1.left.conj().T @ w2.left


def window_fiber(window: WindowData, T, rank_tol: float = RANK_TOL):
    """Fiber and evaluation operator of the windowed pair at T.lam.

    ``T`` is the windowed boundary value F E_w R(lam + i0) E_w F*.
    """
    Psi = window.left
    phi = Psi.conj().T @ phi_matrix(T) @ Psi
    phi = 0.5 * (phi + phi.conj().T)
    eta = eta_matrix(phi)
    Q, r = fiber_space(eta, rank_tol)
    fib = FiberData(T.lam, phi, eta, Q, r, rank_tol, window.interval)
    return fib, EvaluationOperator(T.lam, Q.conj().T @ eta, window.interval)


def windowed_evaluation(model, rigging, window: WindowData, lam, margin=0.0, rank_tol=RANK_TOL):
    T = windowed_boundary_value(model, rigging, window.interval, lam, margin=margin)
    return window_fiber(window, T, rank_tol)


@dataclass(frozen=True, eq=False)
class GluingUnitary:
    lam: float
    source: tuple
    target: tuple
    U: np.ndarray
    residual: float
    unitarity_defect: float


def gluing_unitary(lam, w1: WindowData, w2: WindowData, ev1: EvaluationOperator,
                   ev2: EvaluationOperator) -> GluingUnitary:
    """Unitary U with U E^{w1}(E_{w1} f) = E^{w2}(E_{w2} f).

    Probes are f = F* psi_j^{w1} for the first min(2r + 4, d) Schmidt
    vectors.  U is the least-squares solution projected onto its polar
    factor; the unitarity defect refers to the least-squares solution.
    """
    r = ev1.rank
    if ev2.rank != r:
        raise GluingError(f"fiber ranks differ between windows ({r} vs {ev2.rank}) at lambda={lam}")
    if r == 0:
        return GluingUnitary(lam, w1.interval, w2.interval, np.zeros((0, 0)), 0.0, 0.0)
    p = min(2 * r + 4, w1.rank)
    G = w1.left[:, :p]
    A1 = ev1.matrix @ (w1.left.conj().T @ G)
    A2 = ev2.matrix @ (w2.left.conj().T @ G)
    if np.linalg.matrix_rank(A1, tol=1e-10 * max(1.0, np.abs(A1).max())) < r:
        raise GluingError("probe set does not span the source fiber")
    U_ls = A2 @ np.linalg.pinv(A1)
    defect = float(np.linalg.norm(U_ls.conj().T @ U_ls - np.eye(r), 2))
    u, _, vh = np.linalg.svd(U_ls)
    U = u @ vh
    res = float(np.linalg.norm(U @ A1 - A2, 2))
    return GluingUnitary(lam, w1.interval, w2.interval, U, res, defect)


@dataclass(frozen=True, eq=False)
class SheafSection:
    """Values of a section on a shared grid, one row of fiber vectors per
    window (``None`` where the grid point lies outside the window)."""

    grid: np.ndarray
    weights: np.ndarray
    windows: list
    values: list

    def window_norm(self, i: int) -> float:
        total = 0.0
        for w, v in zip(self.weights, self.values[i]):
            if v is not None:
                total += w * float(np.vdot(v, v).real)
        return float(np.sqrt(total))


def evaluate_section(model: SpectralModel, rigging: Rigging, g, windows, grid, weights,
                     rank_tol: float = RANK_TOL) -> SheafSection:
    """Section lam -> E^w_lam(E_w f) of f = F* g over each window."""
    g = np.asarray(getattr(g, "coords", g), dtype=complex)
    a, b = model.interval
    values = []
    datas = []
    for interval in windows:
        wd = interval if isinstance(interval, WindowData) else schmidt_window(model, rigging, interval)
        datas.append(wd.interval)
        beta = wd.left.conj().T @ g
        lo, hi = wd.interval
        row = []
        for lam in grid:
            if lo < lam < hi and a < lam < b and wd.rank:
                _, ev = windowed_evaluation(model, rigging, wd, lam, 0.0, rank_tol)
                row.append(ev.matrix @ beta)
            else:
                row.append(None)
        values.append(row)
    return SheafSection(np.asarray(grid, float), np.asarray(weights, float), datas, values)


def zero_section(grid, weights, windows) -> SheafSection:
    return SheafSection(np.asarray(grid, float), np.asarray(weights, float), list(windows),
                        [[None] * len(grid) for _ in windows])


def section_norm(section: SheafSection, chain=None):
    """Supremum of the per-window direct-integral norms along a chain.

    Returns the norm and the list of per-window norms in chain order.
    """
    order = range(len(section.windows)) if chain is None else [section.windows.index(tuple(c)) for c in chain]
    norms = [section.window_norm(i) for i in order]
    return (max(norms) if norms else 0.0), norms


def quadrature_grid(model: SpectralModel):
    """Nodes and weights of the model itself as the shared energy grid."""
    if model.nodes is None:
        raise ConfigError("quadrature_grid needs the quadrature model")
    return model.nodes, model.weights


def lattice_grid(n: int, lo: float = -2.0, hi: float = 2.0):
    """Energy grid lam = 2 cos t with Gauss-Legendre weights in t, so that
    sum w f(lam) approximates the integral of f over (lo, hi)."""
    from numpy.polynomial import legendre
    t1 = np.arccos(min(hi, 2.0) / 2.0)
    t2 = np.arccos(max(lo, -2.0) / 2.0)
    t, w = legendre.leggauss(n)
    th = 0.5 * (t2 - t1) * t + 0.5 * (t2 + t1)
    wt = 0.5 * (t2 - t1) * w * 2.0 * np.sin(th)
    lam = 2.0 * np.cos(th)
    order = np.argsort(lam)
    return lam[order], wt[order]
