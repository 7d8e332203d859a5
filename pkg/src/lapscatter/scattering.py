"""Wave matrices, scattering matrices and their direct integrals.

Everything is assembled in auxiliary-space coordinates.  For H1 = H0 + F*JF
with boundary values T0, T1 and fibers E0, E1 at lam:

* forms: ``a_+ = (1 - T1(lam - i0) J) phi0 = phi1 (1 + J T0(lam + i0))`` and
  ``a_- = (1 - T1(lam + i0) J) phi0 = phi1 (1 + J T0(lam - i0))``;
* wave matrices: ``E1* w E0 = a`` (defining form) and
  ``w E0 = E1 (1 + J T0(lam +- i0))`` (closed formula);
* scattering matrix: ``S = w+* w-`` and the stationary expression
  ``S = 1 - 2 pi i E0 J (1 + T0 J)^{-1} E0*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import pmap
from .errors import ConfigError, EdgeOfSpectrumError, MissingBlocksError, ResonanceError, WellDefinednessError
from .fiber import RANK_TOL, EvaluationOperator, FiberData, build_fiber, evaluation_operator
from .lap import RESONANCE_CONDITION, BoundaryResolvent, boundary_value, perturbed_boundary_value, resonance_condition
from .model import LATTICE, Perturbation, Rigging, SpectralModel

WELL_DEFINED_TOL = 1e-6


def _J(pert) -> np.ndarray:
    return pert.J if isinstance(pert, Perturbation) else np.atleast_2d(np.asarray(pert, dtype=complex))


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ConfigError(f"sign must be + or -, got {sign!r}")


@dataclass(frozen=True, eq=False)
class OperatorPoint:
    """Boundary value, fiber and evaluation operator of one operator at lam."""

    T: BoundaryResolvent
    fiber: FiberData
    ev: EvaluationOperator

    @property
    def lam(self) -> float:
        return self.T.lam

    @property
    def rank(self) -> int:
        return self.fiber.rank


def operator_point(T: BoundaryResolvent, rank_tol: float = RANK_TOL) -> OperatorPoint:
    fib = build_fiber(T, rank_tol)
    return OperatorPoint(T, fib, evaluation_operator(fib))


def perturbed_point(p0: OperatorPoint, pert, rank_tol: float = RANK_TOL) -> OperatorPoint:
    J = _J(pert)
    return operator_point(perturbed_boundary_value(p0.T, J), rank_tol)


@dataclass(frozen=True, eq=False)
class APlusMinus:
    lam: float
    sign: int
    matrix: np.ndarray
    factorization_residual: float


def a_form(lam, sign, p0: OperatorPoint, p1: OperatorPoint, pert) -> APlusMinus:
    """The form a_+- as an m x m matrix on beta coordinates (H1 x H1)."""
    s = _sign(sign)
    J = _J(pert)
    T0, T1 = p0.T.T, p1.T.T
    I = np.eye(T0.shape[0])
    T1_opp = T1.conj().T if s > 0 else T1
    T0_same = T0 if s > 0 else T0.conj().T
    left = (I - T1_opp @ J) @ p0.fiber.phi
    right = p1.fiber.phi @ (I + J @ T0_same)
    res = float(np.max(np.abs(left - right), initial=0.0))
    return APlusMinus(float(lam), s, left, res)


@dataclass(frozen=True, eq=False)
class WaveMatrix:
    lam: float
    sign: int
    w: np.ndarray
    form_residual: float
    closed_residual: float
    construction_gap: float

    @property
    def unitarity_defect(self) -> float:
        return unitarity_defect(self.w)


def unitarity_defect(U: np.ndarray) -> float:
    if U.size == 0:
        return 0.0
    a = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[1]), 2)
    b = np.linalg.norm(U @ U.conj().T - np.eye(U.shape[0]), 2)
    return float(max(a, b))


def wave_matrix(lam, sign, a: APlusMinus, p0: OperatorPoint, p1: OperatorPoint, pert,
                tol: float = WELL_DEFINED_TOL) -> WaveMatrix:
    """w_+- : fiber of H0 -> fiber of H1, by both constructions.

    The reported matrix is the closed formula; the least-squares solution of
    the defining form equation must agree with it.
    """
    s = _sign(sign)
    if a.sign != s:
        raise ConfigError("form and wave matrix signs differ")
    J = _J(pert)
    E0, E1 = p0.ev.matrix, p1.ev.matrix
    r0, r1 = E0.shape[0], E1.shape[0]
    if r0 == 0 or r1 == 0:
        w = np.zeros((r1, r0), dtype=complex)
        return WaveMatrix(float(lam), s, w, 0.0, 0.0, 0.0)
    T0 = p0.T.T if s > 0 else p0.T.T.conj().T
    rhs = E1 @ (np.eye(J.shape[0]) + J @ T0)
    w = rhs @ np.linalg.pinv(E0)
    closed_res = float(np.linalg.norm(w @ E0 - rhs, 2))
    w_form = np.linalg.pinv(E1.conj().T) @ a.matrix @ np.linalg.pinv(E0)
    form_res = float(np.linalg.norm(E1.conj().T @ w_form @ E0 - a.matrix))
    scale = max(1.0, float(np.linalg.norm(a.matrix)))
    if max(form_res, closed_res) > tol * scale:
        raise WellDefinednessError(
            f"well-definedness violated at lambda={lam}: residuals {form_res:.2e}, {closed_res:.2e}")
    gap = float(np.linalg.norm(w_form - w, 2))
    return WaveMatrix(float(lam), s, w, form_res, closed_res, gap)


def wave_pair(lam, sign, p0: OperatorPoint, p1: OperatorPoint, pert) -> WaveMatrix:
    """Form plus wave matrix in one call."""
    return wave_matrix(lam, sign, a_form(lam, sign, p0, p1, pert), p0, p1, pert)


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    lam: float
    S: np.ndarray
    eigenphases: np.ndarray
    nuclear_norm: float
    unitarity_defect: float


def _scattering(lam, S) -> ScatteringMatrix:
    r = S.shape[0]
    if r == 0:
        return ScatteringMatrix(float(lam), S, np.zeros(0), 0.0, 0.0)
    phases = np.sort(np.angle(np.linalg.eigvals(S)))
    nuc = float(np.sum(np.linalg.svd(S - np.eye(r), compute_uv=False)))
    return ScatteringMatrix(float(lam), S, phases, nuc, unitarity_defect(S))


def scattering_matrix(lam, w_plus: WaveMatrix, w_minus: WaveMatrix) -> ScatteringMatrix:
    """S = w+* w-."""
    if w_plus.sign != 1 or w_minus.sign != -1:
        raise ConfigError("scattering_matrix needs (w+, w-)")
    return _scattering(lam, w_plus.w.conj().T @ w_minus.w)


def stationary_scattering_matrix(lam, p0: OperatorPoint, pert) -> ScatteringMatrix:
    """S = 1 - 2 pi i E0 J (1 + T0 J)^{-1} E0*."""
    J = _J(pert)
    T0 = p0.T.T
    E0 = p0.ev.matrix
    A = np.eye(T0.shape[0]) + T0 @ J
    cond = resonance_condition(A)
    if not np.isfinite(cond) or cond > RESONANCE_CONDITION:
        raise ResonanceError(f"embedded resonance at lambda={lam}")
    X = np.linalg.solve(A, E0.conj().T)
    S = np.eye(E0.shape[0]) - 2j * math.pi * (E0 @ J @ X)
    return _scattering(lam, S)


@dataclass(frozen=True, eq=False)
class ScatteringPoint:
    """All stationary objects for the pair (H0, H0 + V) at one energy."""

    lam: float
    p0: OperatorPoint
    p1: OperatorPoint
    a_plus: APlusMinus
    a_minus: APlusMinus
    w_plus: WaveMatrix
    w_minus: WaveMatrix
    S: ScatteringMatrix
    S_stationary: ScatteringMatrix
    J: np.ndarray = field(repr=False, default=None)

    @property
    def stationary_gap(self) -> float:
        if self.S.S.size == 0:
            return 0.0
        return float(np.max(np.abs(self.S.S - self.S_stationary.S)))


def scatter_at(T0: BoundaryResolvent, pert, rank_tol: float = RANK_TOL) -> ScatteringPoint:
    J = _J(pert)
    lam = T0.lam
    p0 = operator_point(T0, rank_tol)
    p1 = perturbed_point(p0, J, rank_tol)
    ap = a_form(lam, 1, p0, p1, J)
    am = a_form(lam, -1, p0, p1, J)
    wp = wave_matrix(lam, 1, ap, p0, p1, J)
    wm = wave_matrix(lam, -1, am, p0, p1, J)
    return ScatteringPoint(lam, p0, p1, ap, am, wp, wm, scattering_matrix(lam, wp, wm),
                           stationary_scattering_matrix(lam, p0, J), J)


def scatter_grid(model: SpectralModel, rigging: Rigging, pert, grid, rank_tol: float = RANK_TOL,
                 threads: int = 1, margin: float | None = None) -> list:
    """ScatteringPoint per grid energy, ``None`` where the point is irregular."""
    J = _J(pert)

    def one(lam):
        try:
            return scatter_at(boundary_value(model, rigging, float(lam), margin=margin), J, rank_tol)
        except (ResonanceError, EdgeOfSpectrumError):
            return None

    return pmap(one, grid, threads)


def multiplicativity_check(lam, sign, T0: BoundaryResolvent, pert1, pert2,
                           rank_tol: float = RANK_TOL) -> float:
    """||w(H2, H0) - w(H2, H1) w(H1, H0)|| for H1 = H0 + V1, H2 = H1 + V2."""
    J1, J2 = _J(pert1), _J(pert2)
    p0 = operator_point(T0, rank_tol)
    p1 = perturbed_point(p0, J1, rank_tol)
    p2 = perturbed_point(p1, J2, rank_tol)
    w10 = wave_pair(lam, sign, p0, p1, J1).w
    w21 = wave_pair(lam, sign, p1, p2, J2).w
    w20 = wave_pair(lam, sign, p0, p2, J1 + J2).w
    if w20.size == 0:
        return 0.0
    return float(np.linalg.norm(w20 - w21 @ w10, 2))


def adjoint_law_residual(lam, sign, T0: BoundaryResolvent, pert, rank_tol: float = RANK_TOL) -> float:
    """||w(H1, H0)* - w(H0, H1)||, the second matrix assembled with H1 as the
    unperturbed operator and perturbation -V."""
    J = _J(pert)
    p0 = operator_point(T0, rank_tol)
    p1 = perturbed_point(p0, J, rank_tol)
    w10 = wave_pair(lam, sign, p0, p1, J).w
    w01 = wave_pair(lam, sign, p1, p0, -J).w
    return float(np.linalg.norm(w10.conj().T - w01, 2)) if w10.size else 0.0


def schwarz_slack(a: APlusMinus, p0: OperatorPoint, p1: OperatorPoint, n: int = 100, seed: int = 0) -> float:
    """min over random pairs of ||E1 f|| ||E0 g|| - |<f, a g>|."""
    rng = np.random.default_rng(seed)
    m = a.matrix.shape[0]
    worst = np.inf
    for _ in range(n):
        f = rng.normal(size=m) + 1j * rng.normal(size=m)
        g = rng.normal(size=m) + 1j * rng.normal(size=m)
        lhs = abs(np.vdot(f, a.matrix @ g))
        rhs = np.linalg.norm(p1.ev.matrix @ f) * np.linalg.norm(p0.ev.matrix @ g)
        worst = min(worst, float(rhs - lhs))
    return worst


def chain_rule_residual(lam, T0: BoundaryResolvent, pert1, pert2, rank_tol: float = RANK_TOL) -> float:
    """||S(H2,H0) - w+*(H1,H0) S(H2,H1) w+(H1,H0) S(H1,H0)||."""
    J1, J2 = _J(pert1), _J(pert2)
    p0 = operator_point(T0, rank_tol)
    p1 = perturbed_point(p0, J1, rank_tol)
    p2 = perturbed_point(p1, J2, rank_tol)

    def S_of(pa, pb, J):
        return scattering_matrix(lam, wave_pair(lam, 1, pa, pb, J), wave_pair(lam, -1, pa, pb, J)).S

    wp10 = wave_pair(lam, 1, p0, p1, J1).w
    lhs = S_of(p0, p2, J1 + J2)
    rhs = wp10.conj().T @ S_of(p1, p2, J2) @ wp10 @ S_of(p0, p1, J1)
    return float(np.linalg.norm(lhs - rhs, 2)) if lhs.size else 0.0


# ---------------------------------------------------------------- direct integrals

KINDS = {"W+": "w_plus", "W-": "w_minus", "S": "S"}


@dataclass(frozen=True, eq=False)
class DirectIntegralOperator:
    """Block-diagonal operator on sections sampled on a grid."""

    kind: str
    grid: np.ndarray
    weights: np.ndarray
    blocks: list

    def apply(self, values: list) -> list:
        if len(values) != len(self.blocks):
            raise ConfigError("section and operator grids differ")
        return [B @ v for B, v in zip(self.blocks, values)]

    def adjoint(self) -> "DirectIntegralOperator":
        return DirectIntegralOperator(self.kind + "*", self.grid, self.weights,
                                      [B.conj().T for B in self.blocks])

    def __matmul__(self, other: "DirectIntegralOperator") -> "DirectIntegralOperator":
        if len(self.blocks) != len(other.blocks) or not np.array_equal(self.grid, other.grid):
            raise ConfigError("operators live on different grids")
        return DirectIntegralOperator(f"{self.kind}{other.kind}", self.grid, self.weights,
                                      [A @ B for A, B in zip(self.blocks, other.blocks)])

    def commutator_with_energy(self, values: list) -> float:
        """max ||lam B v - B (lam v)|| over the grid (zero for block operators)."""
        out = 0.0
        for lam, B, v in zip(self.grid, self.blocks, values):
            out = max(out, float(np.linalg.norm(lam * (B @ v) - B @ (lam * v))))
        return out


def assemble_direct_integral(points: list, kind: str, grid=None, weights=None) -> DirectIntegralOperator:
    """Collect per-energy blocks (w+, w- or S) into a direct integral."""
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {sorted(KINDS)}")
    grid = np.array([p.lam if p is not None else np.nan for p in points]) if grid is None else np.asarray(grid, float)
    missing = [float(g) for g, p in zip(grid, points) if p is None]
    if missing:
        raise MissingBlocksError(f"no {kind} blocks at lambda = {missing}")
    weights = np.ones(len(points)) if weights is None else np.asarray(weights, float)
    attr = KINDS[kind]
    blocks = [getattr(p, attr).w if kind != "S" else p.S.S for p in points]
    return DirectIntegralOperator(kind, grid, weights, blocks)


def evaluate_on_grid(points: list, beta, which: str = "p0") -> list:
    """Section lam -> E_lam f of f = F* beta for H0 (``p0``) or H1 (``p1``)."""
    beta = np.asarray(getattr(beta, "coords", beta), dtype=complex)
    return [getattr(p, which).ev.matrix @ beta for p in points]


def pullback(op: DirectIntegralOperator, points: list, rigging: Rigging, f) -> np.ndarray:
    """Model-coordinate action E(H1)* op E(H0) on a model vector f in ran F*.

    E_lam(H) f = E beta with beta = (F*)^+ f; its model adjoint is F^+ E*.
    """
    F = rigging.matrix()
    Fp = np.linalg.pinv(F)
    beta = Fp.conj().T @ np.asarray(f, dtype=complex)
    target = "p1" if op.kind in ("W+", "W-") else "p0"
    acc = np.zeros(F.shape[0], dtype=complex)
    for w, B, p in zip(op.weights, op.blocks, points):
        c = B @ (p.p0.ev.matrix @ beta)
        acc += w * (getattr(p, target).ev.matrix.conj().T @ c)
    return Fp @ acc


def stationary_wave_operator(model: SpectralModel, rigging: Rigging, pert, f, grid, weights,
                             sign: int = -1, margin: float = 0.0, threads: int = 1) -> np.ndarray:
    """W_+- f = int E_lam(H1)* w_+-(lam) E_lam(H0) f dlam in model coordinates.

    ``f`` must lie in ran F*; the result is the restriction of W_+- f to the
    support of the rigging (all of model space when F is invertible).
    """
    points = scatter_grid(model, rigging, pert, grid, threads=threads, margin=margin)
    kind = "W+" if _sign(sign) > 0 else "W-"
    op = assemble_direct_integral(points, kind, grid, weights)
    return pullback(op, points, rigging, f)


# ---------------------------------------------------------------- lattice channels

def channel_map(rigging: Rigging, lam: float) -> np.ndarray:
    """Free lattice channels at lam = 2 cos t: rows for momenta +t and -t.

    Row c maps beta to f^(c t) / sqrt(4 pi sin t) with f = F* beta and
    f^(k) = sum_n f(n) exp(-i k n); C* C equals phi0.  The group velocity
    of momentum k is -2 sin k, so channel +t moves left and -t moves right.
    """
    if rigging.model.kind != LATTICE:
        raise ConfigError("channels are defined for the lattice model")
    theta = math.acos(lam / 2.0)
    s = rigging.sites
    k = rigging.site_weights
    norm = math.sqrt(4.0 * math.pi * math.sin(theta))
    return np.vstack([k * np.exp(-1j * theta * s), k * np.exp(1j * theta * s)]) / norm


def channel_unitary(point: ScatteringPoint, rigging: Rigging) -> np.ndarray:
    """Y with C = Y E0: fiber coordinates -> channel coordinates."""
    return channel_map(rigging, point.lam) @ np.linalg.pinv(point.p0.ev.matrix)


def lead_scattering_matrix(point: ScatteringPoint, rigging: Rigging, S=None) -> np.ndarray:
    """S in lead convention: rows outgoing (left, right), columns incoming
    (from left, from right).  Entry [0, 1] is the right-to-left transmission
    amplitude, entry [1, 0] the left-to-right one."""
    Y = channel_unitary(point, rigging)
    S = point.S.S if S is None else S
    Sc = Y @ S @ Y.conj().T
    # outgoing (left, right) = channels (+t, -t); incoming from (left, right) = (-t, +t)
    return Sc[:, [1, 0]]
