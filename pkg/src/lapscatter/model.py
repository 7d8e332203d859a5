"""Desk-scale operator models, rigging operators and the Hilbert scale.

Two models of a self-adjoint operator with purely absolutely continuous
spectrum are provided:

``quadrature``
    Multiplication by the independent variable on L^2([a, b]).  Vectors are
    stored in unitary node coordinates ``u_n = sqrt(q_n) f(x_n)`` over
    Gauss-Legendre nodes ``x_n`` with weights ``q_n``.
``lattice``
    The discrete Laplacian ``(H f)(n) = f(n+1) + f(n-1)`` on l^2(Z).  Vectors
    live on the truncated range ``-L..L``; the Green's function is the exact
    infinite-lattice kernel.

A rigging ``F: H -> K`` is a positive weight ``kappa`` followed by the
coordinates against an orthonormal auxiliary family ``psi_1..psi_m``:
orthonormal Legendre polynomials on ``[a, b]`` for the quadrature model and
site deltas for the lattice.  Regular vectors ``f = F* g`` are carried by the
auxiliary coordinates ``beta = g``, so that ``||f||_{H1} = ||beta||``; the
dual space is carried by ``gamma = F f`` with ``||f||_{H-1} = ||gamma||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse
from scipy.linalg import toeplitz

from .errors import ConfigError, EdgeOfSpectrumError, ScaleSpaceError

QUADRATURE = "quadrature"
LATTICE = "lattice"

_KIND_ALIASES = {
    "quadrature": QUADRATURE,
    "quadraturemultiplication": QUADRATURE,
    "friedrichs": QUADRATURE,
    "lattice": LATTICE,
    "latticelaplacian": LATTICE,
}

MIN_NODES = 8


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Unperturbed operator H0 together with its discretization."""

    kind: str
    interval: tuple[float, float]
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None
    radius: int | None = None

    @property
    def spectrum(self) -> tuple[float, float]:
        return self.interval

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]

    @property
    def size(self) -> int:
        if self.kind == QUADRATURE:
            return len(self.nodes)
        return 2 * self.radius + 1

    @property
    def sites(self) -> np.ndarray:
        if self.kind != LATTICE:
            raise ConfigError("sites are only defined for the lattice model")
        return np.arange(-self.radius, self.radius + 1)

    def site_index(self, n) -> np.ndarray:
        n = np.asarray(n)
        if np.any(np.abs(n) > self.radius):
            raise ConfigError("site outside the truncated range")
        return n + self.radius

    def hamiltonian(self):
        """H0 in model coordinates (dense for quadrature, sparse for lattice)."""
        if self.kind == QUADRATURE:
            return np.diag(self.nodes)
        return lattice_laplacian(self.radius)


def lattice_laplacian(radius: int, potential: dict | None = None):
    """Sparse nearest-neighbour Laplacian on sites -radius..radius."""
    n = 2 * radius + 1
    diag = np.zeros(n)
    for site, value in (potential or {}).items():
        diag[site + radius] += value
    off = np.ones(n - 1)
    return sparse.diags([off, diag, off], [-1, 0, 1], format="csr")


def build_model(kind: str, interval=None, N: int | None = None, L: int | None = None) -> SpectralModel:
    """Validate parameters and build a ``SpectralModel``."""
    key = str(kind).replace("_", "").replace("-", "").lower()
    if key not in _KIND_ALIASES:
        raise ConfigError(f"unknown model kind {kind!r}")
    kind = _KIND_ALIASES[key]
    if kind == QUADRATURE:
        if interval is None or N is None:
            raise ConfigError("quadrature model needs an interval and a node count")
        a, b = (float(v) for v in interval)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ConfigError("interval endpoints must be finite")
        if not a < b:
            raise ConfigError("empty interval")
        N = _as_count(N, "N")
        t, w = legendre.leggauss(N)
        x = 0.5 * (b - a) * t + 0.5 * (a + b)
        q = 0.5 * (b - a) * w
        return SpectralModel(QUADRATURE, (a, b), nodes=x, weights=q)
    if L is None:
        raise ConfigError("lattice model needs a truncation radius L")
    L = _as_count(L, "L")
    return SpectralModel(LATTICE, (-2.0, 2.0), radius=L)


def _as_count(value, name):
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{name} must be an integer")
    try:
        value = int(value)
    except (TypeError, ValueError, OverflowError) as exc:
        raise ConfigError(f"{name} must be an integer") from exc
    if value < MIN_NODES:
        raise ConfigError(f"{name} must be at least {MIN_NODES}")
    return value


# ---------------------------------------------------------------- Green's function

def _zeta(z):
    """Root of zeta + 1/zeta = z inside the unit disc."""
    z = np.asarray(z, dtype=complex)
    s = np.sqrt(z * z - 4.0)
    r1 = 0.5 * (z - s)
    r2 = 0.5 * (z + s)
    return np.where(np.abs(r1) < 1.0, r1, r2)


def free_green(model: SpectralModel, n, m, z, boundary: bool = False):
    """Free lattice Green's function G0(n, m; z) = <d_n, (H0 - z)^{-1} d_m>.

    With ``boundary=True`` the argument is a real energy in (-2, 2) and the
    limit from the upper half plane is returned, ``i exp(-i t |n-m|)/(2 sin t)``
    with ``lambda = 2 cos t``.
    """
    if model.kind != LATTICE:
        raise ConfigError("free_green is defined for the lattice model")
    d = np.abs(np.asarray(n) - np.asarray(m))
    if boundary:
        lam = float(np.real(z))
        if not -2.0 < lam < 2.0:
            raise EdgeOfSpectrumError(f"edge-of-spectrum: lambda={lam} outside (-2, 2)")
        theta = math.acos(lam / 2.0)
        return 1j * np.exp(-1j * theta * d) / (2.0 * math.sin(theta))
    z = complex(z)
    if z.imag < 0:
        raise ConfigError("free_green needs Im z >= 0")
    if z.imag == 0 and abs(z.real) <= 2.0:
        raise EdgeOfSpectrumError("real z inside the spectrum; use boundary=True")
    zeta = _zeta(z)
    return zeta ** d / (zeta - 1.0 / zeta)


# ---------------------------------------------------------------- rigging

def weight_function(profile) -> Callable[[np.ndarray], np.ndarray]:
    """Weight profile from a name: ``unit``, ``decay`` or ``power:<p>``.

    ``decay`` is ``(1 + |x|)^-1``; ``power:p`` is ``(1 + |x|)^-p``.
    Callables are passed through.
    """
    if callable(profile):
        return profile
    name = str(profile).strip().lower()
    if name in ("unit", "one", "1"):
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if name == "decay":
        return lambda x: 1.0 / (1.0 + np.abs(np.asarray(x, dtype=float)))
    if name.startswith("power:"):
        try:
            p = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad weight {profile!r}") from exc
        return lambda x: (1.0 + np.abs(np.asarray(x, dtype=float))) ** (-p)
    raise ConfigError(f"unknown weight profile {profile!r}")


def default_sites(m: int) -> np.ndarray:
    """``m`` consecutive sites starting at ``-(m-1)//2``: [0], [0,1], [-1,0,1], ..."""
    lo = -((m - 1) // 2)
    return np.arange(lo, lo + m)


@dataclass(frozen=True, eq=False)
class Rigging:
    """Rigging operator F = (coordinates against psi_1..psi_m) o kappa."""

    model: SpectralModel
    weight: Callable = field(repr=False)
    m: int
    sites: np.ndarray | None = None
    weight_name: str = "custom"

    def kappa(self, x) -> np.ndarray:
        return np.asarray(self.weight(np.asarray(x, dtype=float)), dtype=float)

    def basis(self, x) -> np.ndarray:
        """Auxiliary functions psi_j(x) as an array of shape (len(x), m) (quadrature)."""
        a, b = self.model.interval
        t = (2.0 * np.asarray(x, dtype=float) - a - b) / (b - a)
        scale = np.sqrt((2.0 * np.arange(self.m) + 1.0) / (b - a))
        return legendre.legvander(t, self.m - 1) * scale

    def amplitude(self, x) -> np.ndarray:
        """Rows kappa(x) conj(psi(x)); the density is their outer product."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.kappa(x)[:, None] * np.conj(self.basis(x))

    def density(self, x) -> np.ndarray:
        """kappa(x)^2 conj(psi_i(x)) psi_j(x), shape (len(x), m, m) (quadrature)."""
        a = self.amplitude(x)
        return a[:, :, None] * np.conj(a[:, None, :])

    @property
    def site_weights(self) -> np.ndarray:
        return self.kappa(self.sites)

    def matrix(self) -> np.ndarray:
        """F as an m x size matrix acting on model coordinates."""
        mod = self.model
        if mod.kind == QUADRATURE:
            a = self.amplitude(mod.nodes)  # (N, m)
            return (np.sqrt(mod.weights)[:, None] * a).T.astype(complex)
        F = np.zeros((self.m, mod.size), dtype=complex)
        F[np.arange(self.m), mod.site_index(self.sites)] = self.site_weights
        return F

    def gram(self) -> np.ndarray:
        """Gram matrix of the auxiliary family."""
        mod = self.model
        if mod.kind == LATTICE:
            e = np.zeros((self.m, self.m))
            e[np.arange(self.m), np.arange(self.m)] = 1.0
            return e
        a, b = mod.interval
        t, w = legendre.leggauss(self.m + 8)
        x = 0.5 * (b - a) * t + 0.5 * (a + b)
        P = self.basis(x)
        return (np.conj(P).T * (0.5 * (b - a) * w)) @ P

    def hs_norm_sq(self) -> float:
        """sum of kappa^2 (times quadrature weights): ||F||_HS^2 at desk scale."""
        mod = self.model
        if mod.kind == QUADRATURE:
            return float(np.sum(mod.weights * self.kappa(mod.nodes) ** 2))
        return float(np.sum(self.kappa(mod.sites) ** 2))


def build_rigging(model: SpectralModel, weight="unit", m: int = 1, sites=None) -> Rigging:
    """Validated rigging; lattice sites default to ``default_sites(m)``."""
    m = int(m)
    if m < 1:
        raise ConfigError("auxiliary dimension m must be positive")
    func = weight_function(weight)
    name = weight if isinstance(weight, str) else "custom"
    if model.kind == LATTICE:
        sites = default_sites(m) if sites is None else np.asarray(sites, dtype=int)
        if len(sites) != m or len(set(sites.tolist())) != m:
            raise ConfigError("lattice rigging needs m distinct sites")
        if np.any(np.abs(sites) > model.radius):
            raise ConfigError("rigged sites must lie inside the truncated range")
        probe = func(sites.astype(float))
    else:
        sites = None
        probe = func(model.nodes)
    probe = np.asarray(probe, dtype=float)
    if not np.all(np.isfinite(probe)) or np.any(probe <= 0):
        raise ConfigError("rigging weight must be strictly positive and finite")
    return Rigging(model, func, m, sites, name)


# ---------------------------------------------------------------- perturbation

@dataclass(frozen=True, eq=False)
class Perturbation:
    """Hermitian m x m matrix J; the perturbation is V = F* J F."""

    J: np.ndarray

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=complex))
        if J.shape[0] != J.shape[1]:
            raise ConfigError("J must be square")
        if not np.all(np.isfinite(J)):
            raise ConfigError("J must be finite")
        if np.max(np.abs(J - J.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(J).max(initial=0.0)):
            raise ConfigError("J must be Hermitian")
        object.__setattr__(self, "J", 0.5 * (J + J.conj().T))

    @property
    def m(self) -> int:
        return self.J.shape[0]

    def __add__(self, other: "Perturbation") -> "Perturbation":
        return Perturbation(self.J + other.J)

    def __neg__(self) -> "Perturbation":
        return Perturbation(-self.J)

    def operator(self, rigging: Rigging) -> np.ndarray:
        """V = F* J F in model coordinates (dense)."""
        _check_dim(self, rigging)
        F = rigging.matrix()
        return F.conj().T @ self.J @ F


def _check_dim(pert: Perturbation, rigging: Rigging):
    if pert.m != rigging.m:
        raise ConfigError(f"J is {pert.m}x{pert.m} but the rigging has m={rigging.m}")


def zero_perturbation(m: int) -> Perturbation:
    return Perturbation(np.zeros((m, m)))


def rank_one(rigging: Rigging, v: float, index: int = 0) -> Perturbation:
    """J = v e_index e_index*: on the quadrature model with unit weight on [0, 1]
    and index 0 this is V = v <1, .> 1."""
    J = np.zeros((rigging.m, rigging.m), dtype=complex)
    J[index, index] = v
    return Perturbation(J)


def site_potential(rigging: Rigging, values: dict) -> Perturbation:
    """Diagonal potential on rigged lattice sites, V = sum_s v_s |d_s><d_s|."""
    if rigging.model.kind != LATTICE:
        raise ConfigError("site potentials need the lattice model")
    pos = {int(s): j for j, s in enumerate(rigging.sites)}
    J = np.zeros((rigging.m, rigging.m), dtype=complex)
    for site, v in values.items():
        if int(site) not in pos:
            raise ConfigError(f"site {site} is not rigged")
        j = pos[int(site)]
        J[j, j] = v / rigging.site_weights[j] ** 2
    return Perturbation(J)


def perturbed_hamiltonian(rigging: Rigging, pert: Perturbation):
    """H1 = H0 + F* J F in model coordinates."""
    H0 = rigging.model.hamiltonian()
    V = pert.operator(rigging)
    if sparse.issparse(H0):
        return (H0 + sparse.csr_matrix(V)).tocsr()
    return H0 + V


# ---------------------------------------------------------------- Hilbert scale

H1, H, HMINUS1 = "H1", "H", "Hminus1"


@dataclass(frozen=True, eq=False)
class ScaleVector:
    """Vector of the scale H1 c H c H-1 in its natural coordinates.

    ``H1``: beta with f = F* beta.  ``H``: model coordinates.
    ``Hminus1``: gamma = F f.  ``window`` tags coordinates taken in the
    Schmidt basis of a windowed rigging.
    """

    coords: np.ndarray
    space: str = H1
    window: tuple | None = None

    def __post_init__(self):
        if self.space not in (H1, H, HMINUS1):
            raise ScaleSpaceError(f"unknown home space {self.space!r}")
        c = np.asarray(self.coords, dtype=complex).ravel()
        if not np.all(np.isfinite(c)):
            raise ScaleSpaceError("coordinates must be finite")
        object.__setattr__(self, "coords", c)


def h1_vector(beta, window=None) -> ScaleVector:
    return ScaleVector(beta, H1, window)


def from_model(rigging: Rigging, f, tol: float = 1e-9) -> ScaleVector:
    """Express a model vector lying in ran F* through its H1 coordinates."""
    F = rigging.matrix()
    f = np.asarray(f, dtype=complex)
    beta, *_ = np.linalg.lstsq(F.conj().T, f, rcond=None)
    res = np.linalg.norm(F.conj().T @ beta - f)
    if res > tol * max(1.0, np.linalg.norm(f)):
        raise ScaleSpaceError(f"vector is not in H1 (residual {res:.2e})")
    return ScaleVector(beta, H1)


def to_model(f: ScaleVector, rigging: Rigging) -> np.ndarray:
    if f.space == H:
        return f.coords
    if f.space == H1 and f.window is None:
        return rigging.matrix().conj().T @ f.coords
    raise ScaleSpaceError(f"cannot realize a {f.space} vector in model coordinates")


def to_minus1(f: ScaleVector, rigging: Rigging) -> ScaleVector:
    """The same vector viewed in H-1 (coordinates gamma = F f)."""
    if f.space == HMINUS1:
        return f
    return ScaleVector(rigging.matrix() @ to_model(f, rigging), HMINUS1)


def h1_norm(f: ScaleVector) -> float:
    if f.space != H1:
        raise ScaleSpaceError(f"h1_norm needs an H1 vector, got {f.space}")
    return float(np.linalg.norm(f.coords))


def h_minus1_norm(f: ScaleVector, rigging: Rigging | None = None) -> float:
    if f.space == HMINUS1:
        return float(np.linalg.norm(f.coords))
    if rigging is None:
        raise ScaleSpaceError("a rigging is needed to embed into H-1")
    return float(np.linalg.norm(to_minus1(f, rigging).coords))


def pairing(f: ScaleVector, g: ScaleVector) -> complex:
    """Duality pairing <f, g>_{1,-1}, antilinear in f."""
    if f.space != H1 or g.space != HMINUS1:
        raise ScaleSpaceError(f"pairing needs (H1, Hminus1), got ({f.space}, {g.space})")
    if f.window != g.window:
        raise ScaleSpaceError("pairing of vectors from different windows")
    if f.coords.shape != g.coords.shape:
        raise ScaleSpaceError("coordinate lengths differ")
    return complex(np.vdot(f.coords, g.coords))


# ---------------------------------------------------------------- spectral windows

@dataclass(frozen=True, eq=False)
class WindowProjection:
    interval: tuple[float, float]
    matrix: np.ndarray
    idempotency_residual: float


def _check_window(interval):
    lo, hi = (float(v) for v in interval)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("window must be bounded")
    if not lo < hi:
        raise ConfigError("window must be a nonempty open interval")
    return lo, hi


def lattice_window_angles(interval) -> tuple[float, float]:
    """Momentum range (t1, t2) in [0, pi] with 2 cos k in the window for t1 < k < t2."""
    lo, hi = interval
    t1 = math.acos(min(max(hi, -2.0), 2.0) / 2.0)
    t2 = math.acos(min(max(lo, -2.0), 2.0) / 2.0)
    return t1, t2


def lattice_window_kernel(interval, d) -> np.ndarray:
    """E_window(n, m) of the infinite lattice as a function of d = n - m."""
    t1, t2 = lattice_window_angles(interval)
    d = np.asarray(d, dtype=float)
    out = np.full(d.shape, (t2 - t1) / np.pi)
    nz = d != 0
    out[nz] = (np.sin(t2 * d[nz]) - np.sin(t1 * d[nz])) / (np.pi * d[nz])
    return out


def window_projection(model: SpectralModel, interval, block: int = 10) -> WindowProjection:
    """Spectral projection of H0 onto a bounded open window.

    The idempotency residual is the spectral norm of E^2 - E on the central
    block of half-width ``block``; for the lattice it decays like 1/L because
    of the truncated site range.
    """
    lo, hi = _check_window(interval)
    if model.kind == QUADRATURE:
        x = model.nodes
        E = np.diag(((x > lo) & (x < hi)).astype(float))
        return WindowProjection((lo, hi), E, 0.0)
    N = model.size
    E = toeplitz(lattice_window_kernel((lo, hi), np.arange(N)))
    c = slice(max(0, model.radius - block), min(N, model.radius + block + 1))
    R = (E @ E - E)[c, c]
    return WindowProjection((lo, hi), E, float(np.linalg.norm(R, 2)))
