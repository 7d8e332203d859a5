"""Boundary values of the sandwiched resolvent T(z) = F (H - z)^{-1} F*.

Boundary values on the real axis are computed by a Plemelj split: the
principal value by Gauss-Legendre quadrature of the subtracted integrand
``(rho(x) - rho(lam)) / (x - lam)`` plus the analytic logarithm of the
subtracted pole, and the imaginary part as ``pi rho(lam)``.  An independent
route, Richardson extrapolation of ``T(lam + i y)`` along ``y_k = y0 2^-k``
with off-axis values from a graded composite Gauss rule, serves as a cross-check and as
the membership test for the regular set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre

from ._util import pmap
from .errors import ConfigError, EdgeOfSpectrumError, LAPViolation, ResonanceError
from .model import LATTICE, QUADRATURE, Perturbation, Rigging, SpectralModel, free_green, lattice_window_angles

EDGE_FRACTION = 0.02
RESONANCE_CONDITION = 1e10
REGULAR_TOL = 1e-7
RETRIES = 4


@dataclass(frozen=True, eq=False)
class BoundaryResolvent:
    """Value of T at lam + i0 together with how it was obtained."""

    lam: float
    T: np.ndarray
    method: str = "plemelj"
    residual: float = 0.0
    converged: bool = True
    condition: float = 1.0
    window: tuple | None = None
    info: dict = field(default_factory=dict)

    @property
    def ImT(self) -> np.ndarray:
        return (self.T - self.T.conj().T) / 2j

    @property
    def m(self) -> int:
        return self.T.shape[0]

    def lower(self) -> np.ndarray:
        """Boundary value from the lower half plane, T(lam - i0) = T(lam + i0)*."""
        return self.T.conj().T

    def min_im_eig(self) -> float:
        A = self.ImT
        return float(np.linalg.eigvalsh(0.5 * (A + A.conj().T)).min())


def resonance_condition(A: np.ndarray) -> float:
    """max(1, ||A||) ||A^{-1}|| for A = 1 + T0 J.

    Unlike the plain singular-value ratio this also flags a small scalar,
    since A is measured against the identity it perturbs.
    """
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0:
        return 1.0
    if not np.all(np.isfinite(s)) or s[-1] == 0.0:
        return math.inf
    return float(max(1.0, s[0]) / s[-1])


def edge_margin(model: SpectralModel) -> float:
    return EDGE_FRACTION * model.width


def _check_interior(model, lam, margin):
    a, b = model.interval
    if not (a + margin <= lam <= b - margin) or not a < lam < b:
        raise EdgeOfSpectrumError(
            f"edge-of-spectrum: lambda={lam} is within {margin:g} of [{a:g}, {b:g}]")


# ---------------------------------------------------------------- off-axis values

def sandwiched_resolvent(model: SpectralModel, rigging: Rigging, z) -> np.ndarray:
    """T(z) for Im z > 0."""
    z = complex(z)
    if not z.imag > 0:
        raise ConfigError("sandwiched_resolvent needs Im z > 0; use boundary_value on the axis")
    if model.kind == LATTICE:
        s = rigging.sites
        k = rigging.site_weights
        G = free_green(model, s[:, None], s[None, :], z)
        return k[:, None] * G * k[None, :]
    a, b = model.interval
    x, w = graded_nodes(a, b, z.real, z.imag)
    return np.tensordot(w / (x - z), rigging.density(x), axes=(0, 0))


def graded_nodes(a, b, center, scale, per_panel: int = 16):
    """Composite Gauss-Legendre rule on [a, b] with panels graded
    geometrically toward ``center`` down to width ``scale``.

    Accurate for integrands with a complex pole at distance ``scale`` from
    ``center``: every panel stays at least its own length from the pole.
    """
    cuts = {a, b}
    if a < center < b:
        cuts.add(center)
        step = scale
        while center - step > a or center + step < b:
            for p in (center - step, center + step):
                if a < p < b:
                    cuts.add(p)
            step *= 2.0
    else:
        near = min(max(center, a), b)
        step = scale
        while near - step > a or near + step < b:
            for p in (near - step, near + step):
                if a < p < b:
                    cuts.add(p)
            step *= 2.0
    cuts = np.array(sorted(cuts))
    t, wt = legendre.leggauss(per_panel)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wt
    return x.ravel(), w.ravel()


def richardson(values, ratio: float = 2.0):
    """Extrapolate a sequence sampled at y0 ratio^-k to y = 0.

    Returns the extrapolated value and the max-norm difference between the
    two finest diagonal entries of the tableau.
    """
    values = [np.asarray(v) for v in values]
    prev = [values[0]]
    best = [values[0]]
    for k in range(1, len(values)):
        row = [values[k]]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - prev[j - 1]) / (ratio ** j - 1.0))
        best.append(row[-1])
        prev = row
    if len(best) < 2:
        return best[-1], float("inf")
    return best[-1], float(np.max(np.abs(best[-1] - best[-2])))


def _extrapolation_y0(model, lam):
    a, b = model.interval
    return min(0.05 * model.width, 0.25 * min(lam - a, b - lam))


def extrapolated_value(model, rigging, lam, levels: int = 8, y0=None, transform=None):
    """Richardson limit of T(lam + i y) (optionally mapped by ``transform``)."""
    y0 = _extrapolation_y0(model, lam) if y0 is None else y0
    vals = []
    for k in range(levels):
        T = sandwiched_resolvent(model, rigging, lam + 1j * y0 * 2.0 ** -k)
        vals.append(T if transform is None else transform(T))
    return richardson(vals)


# ---------------------------------------------------------------- principal values

def _gauss(lo, hi, n):
    t, w = legendre.leggauss(n)
    return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def principal_value(func, lo, hi, x0, n):
    """PV integral of func(x)/(x - x0) over (lo, hi) with lo < x0 < hi.

    ``func`` maps an array of points to an array whose first axis runs over
    the points.  The pole is removed by subtracting func(x0) and adding the
    exact logarithm.
    """
    x, w = _gauss(lo, hi, n)
    f = func(x)
    f0 = func(np.array([x0]))[0]
    dx = x - x0
    close = np.abs(dx) < 1e-9 * (hi - lo)
    ext = (slice(None),) + (None,) * (f.ndim - 1)
    safe = np.where(close, 1.0, dx)
    ratio = (f - f0) / safe[ext]
    if np.any(close):
        h = 1e-5 * (hi - lo)
        deriv = (func(np.array([x0 + h]))[0] - func(np.array([x0 - h]))[0]) / (2 * h)
        ratio[close] = deriv
    return np.tensordot(w, ratio, axes=(0, 0)) + f0 * math.log((hi - x0) / (x0 - lo))


def _quadrature_plemelj(rigging, lo, hi, lam, n):
    pv = principal_value(rigging.density, lo, hi, lam, n)
    return pv + 1j * math.pi * rigging.density([lam])[0]


def _lattice_window_plemelj(rigging, interval, lam, n=None):
    """F E R(lam + i0) E F* on the lattice for a window cutting the band.

    Written over momenta k in (t1, t2) with 2 cos k in the window, the
    entries are (1/pi) int cos(k d) / (2 cos k - lam - i0) dk times the
    site weights.
    """
    theta = math.acos(lam / 2.0)
    t1, t2 = lattice_window_angles(interval)
    s = rigging.sites
    kap = rigging.site_weights
    d = np.abs(s[:, None] - s[None, :]).astype(float)
    n = n or int(64 + np.max(d, initial=0.0))

    def h(k):
        k = np.asarray(k, dtype=float)[:, None, None]
        half = 0.5 * (k - theta)
        return -(np.cos(k * d) / math.pi) / np.sinc(half / math.pi) / (2.0 * np.sin(0.5 * (k + theta)))

    pv = principal_value(h, t1, t2, theta, n)
    im = np.cos(theta * d) / (2.0 * math.sin(theta))
    return kap[:, None] * (pv + 1j * im) * kap[None, :]


# ---------------------------------------------------------------- boundary values

def boundary_value(model: SpectralModel, rigging: Rigging, lam: float, method: str = "plemelj",
                   margin: float | None = None, cross_check: bool = False,
                   levels: int = 8) -> BoundaryResolvent:
    """T(lam + i0) for the unperturbed operator.

    ``method`` is ``"plemelj"`` (quadrature split or exact lattice kernel) or
    ``"extrapolation"``.  With ``cross_check`` the other route is evaluated
    too and the disagreement is stored as the residual.
    """
    lam = float(lam)
    margin = edge_margin(model) if margin is None else margin
    _check_interior(model, lam, margin)
    if method not in ("plemelj", "extrapolation"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "plemelj":
        T = _plemelj_full(model, rigging, lam)
        res, ok, info = 0.0, True, {}
        if cross_check:
            X, tail = extrapolated_value(model, rigging, lam, levels)
            res = float(np.max(np.abs(X - T)))
            ok = tail < REGULAR_TOL and res < REGULAR_TOL
            info = {"extrapolation_tail": tail}
        return BoundaryResolvent(lam, T, "plemelj", res, ok, info=info)
    X, tail = extrapolated_value(model, rigging, lam, levels)
    res, info = tail, {"extrapolation_tail": tail}
    if cross_check:
        res = max(tail, float(np.max(np.abs(X - _plemelj_full(model, rigging, lam)))))
    return BoundaryResolvent(lam, X, "extrapolation", res, res < REGULAR_TOL, info=info)


def _plemelj_full(model, rigging, lam):
    if model.kind == LATTICE:
        s = rigging.sites
        k = rigging.site_weights
        G = free_green(model, s[:, None], s[None, :], lam, boundary=True)
        return k[:, None] * G * k[None, :]
    a, b = model.interval
    return _quadrature_plemelj(rigging, a, b, lam, model.size)


def perturbed_boundary_value(T0: BoundaryResolvent, pert: Perturbation) -> BoundaryResolvent:
    """T1 = (1 + T0 J)^{-1} T0, the boundary value for H1 = H0 + F* J F."""
    J = pert.J if isinstance(pert, Perturbation) else np.atleast_2d(np.asarray(pert, dtype=complex))
    if J.shape != T0.T.shape:
        raise ConfigError("J and T0 have different sizes")
    A = np.eye(T0.m) + T0.T @ J
    cond = resonance_condition(A)
    if not np.isfinite(cond) or cond > RESONANCE_CONDITION:
        raise ResonanceError(f"embedded resonance at lambda={T0.lam} (condition {cond:.3g})")
    T1 = np.linalg.solve(A, T0.T)
    return replace(T0, T=T1, method=T0.method + "+perturbed", condition=cond,
                   residual=T0.residual * cond, info=dict(T0.info))


def windowed_boundary_value(model: SpectralModel, rigging: Rigging, interval, lam: float,
                            margin: float | None = None, order: int | None = None) -> BoundaryResolvent:
    """F E_w R(lam + i0) E_w F* for a bounded open window w containing lam."""
    lo, hi = (float(v) for v in interval)
    if not lo < hi or not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("window must be a bounded nonempty open interval")
    lam = float(lam)
    if not lo < lam < hi:
        raise ConfigError(f"lambda={lam} is not in the window ({lo:g}, {hi:g})")
    margin = edge_margin(model) if margin is None else margin
    if min(lam - lo, hi - lam) < margin:
        raise EdgeOfSpectrumError(f"edge-of-spectrum: lambda={lam} within {margin:g} of the window edge")
    a, b = model.interval
    if lo <= a and hi >= b:
        full = boundary_value(model, rigging, lam, margin=0.0)
        return replace(full, window=(lo, hi))
    _check_interior(model, lam, 0.0)
    if model.kind == QUADRATURE:
        T = _quadrature_plemelj(rigging, max(lo, a), min(hi, b), lam, order or model.size)
    else:
        T = _lattice_window_plemelj(rigging, (lo, hi), lam, order)
    return BoundaryResolvent(lam, T, "plemelj-window", window=(lo, hi))


# ---------------------------------------------------------------- regular set

@dataclass(frozen=True, eq=False)
class RegularPointScan:
    """Per-energy verdicts for H0 and each H0 + V_k.

    ``regular[k, i]`` refers to operator k (k = 0 is H0) at ``grid[i]``.
    """

    grid: np.ndarray
    regular: np.ndarray
    residuals: np.ndarray
    reasons: list

    @property
    def common(self) -> np.ndarray:
        return np.all(self.regular, axis=0)

    @property
    def excluded(self) -> np.ndarray:
        return self.grid[~self.common]

    @property
    def regular_fraction(self) -> float:
        return float(np.mean(self.common)) if len(self.grid) else 1.0


def _scan_point(model, rigging, Js, lam, tol, levels):
    n_ops = 1 + len(Js)
    ok = np.zeros(n_ops, dtype=bool)
    res = np.full(n_ops, np.inf)
    why = [""] * n_ops
    try:
        _check_interior(model, lam, edge_margin(model))
    except EdgeOfSpectrumError:
        return ok, res, ["edge"] * n_ops
    T0 = _plemelj_full(model, rigging, lam)
    y0 = _extrapolation_y0(model, lam)
    m = T0.shape[0]
    # near an embedded resonance the off-axis values vary on the scale of
    # its distance; shrink the starting offset before giving up
    ladders = []

    def ladder(j):
        while len(ladders) <= j:
            y = y0 * 4.0 ** -len(ladders)
            ladders.append([sandwiched_resolvent(model, rigging, lam + 1j * y * 2.0 ** -k) for k in range(levels)])
        return ladders[j]

    def certify(transform, target):
        scale = max(1.0, float(np.max(np.abs(target))))
        best = np.inf
        for j in range(RETRIES):
            X, tail = richardson([transform(T) for T in ladder(j)])
            best = min(best, max(tail, float(np.max(np.abs(X - target)))) / scale)
            if best < tol:
                break
        return best

    res[0] = certify(lambda T: T, T0)
    ok[0] = res[0] < tol
    why[0] = "" if ok[0] else "not converged"
    for k, J in enumerate(Js, start=1):
        A = np.eye(m) + T0 @ J
        cond = resonance_condition(A)
        if not np.isfinite(cond) or cond > RESONANCE_CONDITION:
            why[k] = "resonance"
            continue
        T1 = np.linalg.solve(A, T0)
        res[k] = certify(lambda T: np.linalg.solve(np.eye(m) + T @ J, T), T1)
        ok[k] = res[k] < tol
        why[k] = "" if ok[k] else "not converged"
    return ok, res, why


def scan_regular_points(model: SpectralModel, rigging: Rigging, perturbations, grid,
                        tol: float = REGULAR_TOL, levels: int = 8, threads: int = 1) -> RegularPointScan:
    """Certify grid energies as regular for H0 and for H0 + V_k.

    A point is regular for an operator when it is off the edge margin, the
    auxiliary operator 1 + T0 J is well conditioned, and the Richardson limit
    of the off-axis values agrees with the boundary value to ``tol``.
    """
    Js = [p.J if isinstance(p, Perturbation) else np.asarray(p, dtype=complex) for p in perturbations]
    grid = np.asarray(grid, dtype=float)
    out = pmap(lambda lam: _scan_point(model, rigging, Js, float(lam), tol, levels), grid, threads)
    regular = np.array([o[0] for o in out]).T.reshape(1 + len(Js), len(grid))
    residuals = np.array([o[1] for o in out]).T.reshape(1 + len(Js), len(grid))
    reasons = [o[2] for o in out]
    return RegularPointScan(grid, regular, residuals, reasons)


def check_psd(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian part of A; raises LAPViolation on eigenvalues below -tol."""
    H = 0.5 * (A + A.conj().T)
    lo = float(np.linalg.eigvalsh(H).min()) if H.size else 0.0
    if lo < -tol:
        raise LAPViolation(f"LAP violation: imaginary part has eigenvalue {lo:.3e}")
    return H
